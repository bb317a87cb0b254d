//! Duplex frame transports: an in-process queue, any byte stream, and a
//! recording tap.

use std::io::{ErrorKind, Read, Write};
use std::sync::mpsc::{channel, Receiver, Sender};

use super::frame::{decode_header, Direction, Frame, TapRecord, HEADER_LEN};
use super::ProtocolError;

pub trait Transport {
    fn send(&mut self, frame: &Frame) -> Result<(), ProtocolError>;
    fn recv(&mut self) -> Result<Frame, ProtocolError>;
}

impl<T: Transport + ?Sized> Transport for &mut T {
    fn send(&mut self, frame: &Frame) -> Result<(), ProtocolError> {
        (**self).send(frame)
    }

    fn recv(&mut self) -> Result<Frame, ProtocolError> {
        (**self).recv()
    }
}

/// One end of an in-process duplex queue. Frames travel encoded so both
/// transports exercise the same codec.
#[derive(Debug)]
pub struct ChannelTransport {
    tx: Sender<Vec<u8>>,
    rx: Receiver<Vec<u8>>,
}

pub fn channel_pair() -> (ChannelTransport, ChannelTransport) {
    let (tx_a, rx_b) = channel();
    let (tx_b, rx_a) = channel();
    (
        ChannelTransport { tx: tx_a, rx: rx_a },
        ChannelTransport { tx: tx_b, rx: rx_b },
    )
}

impl Transport for ChannelTransport {
    fn send(&mut self, frame: &Frame) -> Result<(), ProtocolError> {
        self.tx
            .send(frame.encode())
            .map_err(|_| ProtocolError::PeerClosed)
    }

    fn recv(&mut self) -> Result<Frame, ProtocolError> {
        let bytes = self.rx.recv().map_err(|_| ProtocolError::PeerClosed)?;
        Ok(Frame::decode(&bytes)?)
    }
}

/// Frames over any reliable byte stream, e.g. a `TcpStream`.
#[derive(Debug)]
pub struct StreamTransport<S> {
    stream: S,
}

impl<S: Read + Write> StreamTransport<S> {
    pub fn new(stream: S) -> Self {
        Self { stream }
    }

    pub fn into_inner(self) -> S {
        self.stream
    }
}

fn closed_on_eof(e: std::io::Error) -> ProtocolError {
    match e.kind() {
        ErrorKind::UnexpectedEof | ErrorKind::ConnectionReset | ErrorKind::BrokenPipe => {
            ProtocolError::PeerClosed
        }
        _ => ProtocolError::Io(e),
    }
}

impl<S: Read + Write> Transport for StreamTransport<S> {
    fn send(&mut self, frame: &Frame) -> Result<(), ProtocolError> {
        self.stream
            .write_all(&frame.encode())
            .map_err(closed_on_eof)?;
        self.stream.flush().map_err(closed_on_eof)
    }

    fn recv(&mut self) -> Result<Frame, ProtocolError> {
        let mut header = [0u8; HEADER_LEN];
        self.stream.read_exact(&mut header).map_err(closed_on_eof)?;
        let (kind, round, len) = decode_header(&header)?;
        let mut payload = vec![0u8; len];
        self.stream
            .read_exact(&mut payload)
            .map_err(closed_on_eof)?;
        Ok(Frame::new(kind, round, payload))
    }
}

/// Records every frame passing through the inner transport.
#[derive(Debug)]
pub struct Tap<T> {
    inner: T,
    records: Vec<TapRecord>,
}

impl<T: Transport> Tap<T> {
    pub fn new(inner: T) -> Self {
        Self {
            inner,
            records: Vec::new(),
        }
    }

    pub fn records(&self) -> &[TapRecord] {
        &self.records
    }

    pub fn into_parts(self) -> (T, Vec<TapRecord>) {
        (self.inner, self.records)
    }
}

impl<T: Transport> Transport for Tap<T> {
    fn send(&mut self, frame: &Frame) -> Result<(), ProtocolError> {
        self.inner.send(frame)?;
        self.records.push(TapRecord {
            direction: Direction::Sent,
            frame: frame.clone(),
        });
        Ok(())
    }

    fn recv(&mut self) -> Result<Frame, ProtocolError> {
        let frame = self.inner.recv()?;
        self.records.push(TapRecord {
            direction: Direction::Received,
            frame: frame.clone(),
        });
        Ok(frame)
    }
}
