use std::io::{BufReader, BufWriter, Read, Write};
use std::net::TcpStream;
use std::sync::mpsc::{channel, Receiver, Sender};
use std::thread::JoinHandle;

use crate::error::ProtocolError;

/// One flush from one party.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Frame {
    pub round: u64,
    pub label: String,
    pub payload: Vec<u8>,
}

/// A duplex, ordered, reliable byte pipe between the two parties.
pub trait Link: Send {
    fn send(&mut self, frame: Frame) -> Result<(), ProtocolError>;
    fn recv(&mut self) -> Result<Frame, ProtocolError>;
}

pub struct InProcessLink {
    tx: Sender<Frame>,
    rx: Receiver<Frame>,
}

pub fn in_process_pair() -> (InProcessLink, InProcessLink) {
    let (tx0, rx1) = channel();
    let (tx1, rx0) = channel();
    (InProcessLink { tx: tx0, rx: rx0 }, InProcessLink { tx: tx1, rx: rx1 })
}

impl Link for InProcessLink {
    fn send(&mut self, frame: Frame) -> Result<(), ProtocolError> {
        let round = frame.round;
        self.tx.send(frame).map_err(|_| ProtocolError::Disconnected { round })
    }

    fn recv(&mut self) -> Result<Frame, ProtocolError> {
        self.rx.recv().map_err(|_| ProtocolError::Disconnected { round: u64::MAX })
    }
}

/// Wire encoding: u32 payload length, u64 round, u16 label length, label,
/// payload. All integers little-endian.
pub fn encode_frame(frame: &Frame) -> Vec<u8> {
    let mut out = Vec::with_capacity(14 + frame.label.len() + frame.payload.len());
    out.extend_from_slice(&(frame.payload.len() as u32).to_le_bytes());
    out.extend_from_slice(&frame.round.to_le_bytes());
    out.extend_from_slice(&(frame.label.len() as u16).to_le_bytes());
    out.extend_from_slice(frame.label.as_bytes());
    out.extend_from_slice(&frame.payload);
    out
}

pub fn decode_frame(r: &mut impl Read) -> std::io::Result<Frame> {
    let mut len = [0u8; 4];
    r.read_exact(&mut len)?;
    let mut round = [0u8; 8];
    r.read_exact(&mut round)?;
    let mut label_len = [0u8; 2];
    r.read_exact(&mut label_len)?;
    let mut label = vec![0u8; u16::from_le_bytes(label_len) as usize];
    r.read_exact(&mut label)?;
    let mut payload = vec![0u8; u32::from_le_bytes(len) as usize];
    r.read_exact(&mut payload)?;
    Ok(Frame {
        round: u64::from_le_bytes(round),
        label: String::from_utf8_lossy(&label).into_owned(),
        payload,
    })
}

/// Socket transport with the same framing. Writes go through a background
/// thread so that both sides can send large frames before reading.
pub struct TcpLink {
    tx: Option<Sender<Vec<u8>>>,
    writer: Option<JoinHandle<()>>,
    reader: BufReader<TcpStream>,
}

impl TcpLink {
    pub fn new(stream: TcpStream) -> std::io::Result<Self> {
        stream.set_nodelay(true)?;
        let mut out = BufWriter::new(stream.try_clone()?);
        let (tx, rx) = channel::<Vec<u8>>();
        let writer = std::thread::spawn(move || {
            for bytes in rx {
                if out.write_all(&bytes).and_then(|_| out.flush()).is_err() {
                    break;
                }
            }
        });
        Ok(Self { tx: Some(tx), writer: Some(writer), reader: BufReader::new(stream) })
    }
}

impl Link for TcpLink {
    fn send(&mut self, frame: Frame) -> Result<(), ProtocolError> {
        let round = frame.round;
        self.tx
            .as_ref()
            .ok_or(ProtocolError::Disconnected { round })?
            .send(encode_frame(&frame))
            .map_err(|_| ProtocolError::Disconnected { round })
    }

    fn recv(&mut self) -> Result<Frame, ProtocolError> {
        decode_frame(&mut self.reader).map_err(|e| match e.kind() {
            std::io::ErrorKind::UnexpectedEof => ProtocolError::Disconnected { round: u64::MAX },
            _ => ProtocolError::Io(e.to_string()),
        })
    }
}

impl Drop for TcpLink {
    fn drop(&mut self) {
        self.tx.take();
        if let Some(w) = self.writer.take() {
            let _ = w.join();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_encoding_roundtrips() {
        let f = Frame { round: 9, label: "agg".into(), payload: vec![1, 2, 3] };
        let bytes = encode_frame(&f);
        assert_eq!(&bytes[..4], &[3, 0, 0, 0]);
        assert_eq!(decode_frame(&mut bytes.as_slice()).unwrap(), f);
    }

    #[test]
    fn in_process_pair_is_duplex() {
        let (mut a, mut b) = in_process_pair();
        a.send(Frame { round: 0, label: "x".into(), payload: vec![7] }).unwrap();
        b.send(Frame { round: 0, label: "x".into(), payload: vec![8] }).unwrap();
        assert_eq!(b.recv().unwrap().payload, vec![7]);
        assert_eq!(a.recv().unwrap().payload, vec![8]);
        drop(b);
        assert!(a.recv().is_err());
    }

    #[test]
    fn tcp_link_carries_large_frames_both_ways() {
        let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let peer = std::thread::spawn(move || {
            let (s, _) = listener.accept().unwrap();
            let mut l = TcpLink::new(s).unwrap();
            l.send(Frame { round: 0, label: "big".into(), payload: vec![1; 1 << 21] }).unwrap();
            l.recv().unwrap().payload.len()
        });
        let mut l = TcpLink::new(TcpStream::connect(addr).unwrap()).unwrap();
        l.send(Frame { round: 0, label: "big".into(), payload: vec![2; 1 << 21] }).unwrap();
        assert_eq!(l.recv().unwrap().payload.len(), 1 << 21);
        assert_eq!(peer.join().unwrap(), 1 << 21);
    }
}
