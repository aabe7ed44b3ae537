use std::io;

use thiserror::Error;
use tokio::io::{AsyncRead, AsyncReadExt, AsyncWrite, AsyncWriteExt};

use crate::packet::{DecodeError, EncodeError, Packet};

pub const DEFAULT_MAX_PACKET: usize = 1 << 20;

#[derive(Debug, Error)]
pub enum FrameError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Decode(#[from] DecodeError),
    #[error(transparent)]
    Encode(#[from] EncodeError),
    #[error("packet larger than {0} bytes")]
    TooLarge(usize),
    #[error("connection closed mid-packet")]
    Truncated,
}

/// Buffers bytes from a stream and yields whole packets.
pub struct PacketReader<R> {
    inner: R,
    buf: Vec<u8>,
    max_packet: usize,
}

impl<R: AsyncRead + Unpin> PacketReader<R> {
    pub fn new(inner: R, max_packet: usize) -> Self {
        Self {
            inner,
            buf: Vec::with_capacity(4096),
            max_packet,
        }
    }

    /// Next packet, or `None` on a clean end of stream. Cancel safe.
    pub async fn next(&mut self) -> Result<Option<Packet>, FrameError> {
        loop {
            if let Some((packet, used)) = Packet::decode(&self.buf)? {
                self.buf.drain(..used);
                return Ok(Some(packet));
            }
            if self.buf.len() > self.max_packet {
                return Err(FrameError::TooLarge(self.max_packet));
            }
            if self.inner.read_buf(&mut self.buf).await? == 0 {
                return if self.buf.is_empty() {
                    Ok(None)
                } else {
                    Err(FrameError::Truncated)
                };
            }
        }
    }
}

pub async fn write_packet<W: AsyncWrite + Unpin>(w: &mut W, packet: &Packet) -> Result<(), FrameError> {
    let bytes = packet.encode()?;
    w.write_all(&bytes).await?;
    w.flush().await?;
    Ok(())
}
