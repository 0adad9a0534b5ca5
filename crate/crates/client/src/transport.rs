//! Ordered, reliable message transports for peer exchanges.

use std::future::Future;
use std::io;

use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tokio::net::TcpStream;
use tokio::sync::mpsc;

/// Largest frame accepted from a stream transport.
pub const MAX_FRAME: usize = 1 << 20;

pub trait Transport: Send {
    fn send(&mut self, message: Vec<u8>) -> impl Future<Output = io::Result<()>> + Send;
    fn recv(&mut self) -> impl Future<Output = io::Result<Vec<u8>>> + Send;
}

/// One end of an in-process channel pair.
#[derive(Debug)]
pub struct Loopback {
    tx: mpsc::UnboundedSender<Vec<u8>>,
    rx: mpsc::UnboundedReceiver<Vec<u8>>,
}

pub fn loopback_pair() -> (Loopback, Loopback) {
    let (a_tx, a_rx) = mpsc::unbounded_channel();
    let (b_tx, b_rx) = mpsc::unbounded_channel();
    (Loopback { tx: a_tx, rx: b_rx }, Loopback { tx: b_tx, rx: a_rx })
}

fn closed() -> io::Error {
    io::Error::new(io::ErrorKind::BrokenPipe, "peer closed the channel")
}

impl Transport for Loopback {
    async fn send(&mut self, message: Vec<u8>) -> io::Result<()> {
        self.tx.send(message).map_err(|_| closed())
    }

    async fn recv(&mut self) -> io::Result<Vec<u8>> {
        self.rx.recv().await.ok_or_else(closed)
    }
}

/// Frames are a 4-byte big-endian length followed by the payload.
#[derive(Debug)]
pub struct TcpTransport {
    stream: TcpStream,
}

impl TcpTransport {
    pub fn new(stream: TcpStream) -> Self {
        TcpTransport { stream }
    }

    pub async fn connect(addr: impl tokio::net::ToSocketAddrs) -> io::Result<Self> {
        let stream = TcpStream::connect(addr).await?;
        stream.set_nodelay(true)?;
        Ok(TcpTransport { stream })
    }
}

impl Transport for TcpTransport {
    async fn send(&mut self, message: Vec<u8>) -> io::Result<()> {
        if message.len() > MAX_FRAME {
            return Err(io::Error::new(io::ErrorKind::InvalidInput, "frame too large"));
        }
        let mut frame = Vec::with_capacity(4 + message.len());
        frame.extend_from_slice(&(message.len() as u32).to_be_bytes());
        frame.extend_from_slice(&message);
        self.stream.write_all(&frame).await
    }

    async fn recv(&mut self) -> io::Result<Vec<u8>> {
        let mut len = [0u8; 4];
        self.stream.read_exact(&mut len).await?;
        let len = u32::from_be_bytes(len) as usize;
        if len > MAX_FRAME {
            return Err(io::Error::new(io::ErrorKind::InvalidData, format!("frame of {len} bytes exceeds limit")));
        }
        let mut buf = vec![0u8; len];
        self.stream.read_exact(&mut buf).await?;
        Ok(buf)
    }
}
