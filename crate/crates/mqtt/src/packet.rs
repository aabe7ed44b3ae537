//! MQTT 3.1.1 control packets (the subset this crate speaks) and their wire
//! encoding.

use thiserror::Error;

/// Largest value the four-byte Remaining Length field can carry.
pub const MAX_REMAINING_LENGTH: usize = 268_435_455;

const PROTOCOL_NAME: &str = "MQTT";
const PROTOCOL_LEVEL: u8 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum QoS {
    AtMostOnce = 0,
    AtLeastOnce = 1,
}

impl QoS {
    pub fn from_u8(v: u8) -> Option<QoS> {
        match v {
            0 => Some(QoS::AtMostOnce),
            1 => Some(QoS::AtLeastOnce),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Connect {
    pub client_id: String,
    pub keep_alive_s: u16,
    pub clean_session: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConnectReturnCode {
    Accepted = 0,
    UnacceptableProtocolVersion = 1,
    IdentifierRejected = 2,
    ServerUnavailable = 3,
    BadCredentials = 4,
    NotAuthorized = 5,
}

impl ConnectReturnCode {
    fn from_u8(v: u8) -> Option<Self> {
        use ConnectReturnCode::*;
        Some(match v {
            0 => Accepted,
            1 => UnacceptableProtocolVersion,
            2 => IdentifierRejected,
            3 => ServerUnavailable,
            4 => BadCredentials,
            5 => NotAuthorized,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Publish {
    pub topic: String,
    pub payload: Vec<u8>,
    pub qos: QoS,
    /// Present exactly when `qos` is `AtLeastOnce`.
    pub packet_id: Option<u16>,
    pub dup: bool,
}

impl Publish {
    pub fn at_most_once(topic: impl Into<String>, payload: impl Into<Vec<u8>>) -> Self {
        Publish {
            topic: topic.into(),
            payload: payload.into(),
            qos: QoS::AtMostOnce,
            packet_id: None,
            dup: false,
        }
    }

    pub fn at_least_once(topic: impl Into<String>, payload: impl Into<Vec<u8>>, packet_id: u16) -> Self {
        Publish {
            topic: topic.into(),
            payload: payload.into(),
            qos: QoS::AtLeastOnce,
            packet_id: Some(packet_id),
            dup: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubackCode {
    Granted(QoS),
    Failure,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Packet {
    Connect(Connect),
    ConnAck {
        session_present: bool,
        code: ConnectReturnCode,
    },
    Publish(Publish),
    PubAck(u16),
    Subscribe {
        packet_id: u16,
        filters: Vec<(String, QoS)>,
    },
    SubAck {
        packet_id: u16,
        codes: Vec<SubackCode>,
    },
    PingReq,
    PingResp,
    Disconnect,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EncodeError {
    #[error("remaining length {0} exceeds {MAX_REMAINING_LENGTH}")]
    Oversize(usize),
    #[error("string of {0} bytes exceeds 65535")]
    StringTooLong(usize),
    #[error("invalid packet: {0}")]
    InvalidPacket(&'static str),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DecodeError {
    #[error("remaining length uses more than four bytes")]
    MalformedVarint,
    #[error("unknown or unsupported packet type {0}")]
    UnknownPacketType(u8),
    #[error("protocol violation: {0}")]
    ProtocolViolation(&'static str),
}

/// Appends the minimal base-128 encoding of `len`.
pub fn encode_remaining_length(len: usize, out: &mut Vec<u8>) -> Result<(), EncodeError> {
    if len > MAX_REMAINING_LENGTH {
        return Err(EncodeError::Oversize(len));
    }
    let mut x = len;
    loop {
        let mut byte = (x % 128) as u8;
        x /= 128;
        if x > 0 {
            byte |= 0x80;
        }
        out.push(byte);
        if x == 0 {
            return Ok(());
        }
    }
}

/// Reads a Remaining Length field. `Ok(None)` means more bytes are needed.
pub fn decode_remaining_length(buf: &[u8]) -> Result<Option<(usize, usize)>, DecodeError> {
    let mut value = 0usize;
    let mut multiplier = 1usize;
    for (i, byte) in buf.iter().enumerate() {
        if i == 4 {
            return Err(DecodeError::MalformedVarint);
        }
        value += usize::from(byte & 0x7f) * multiplier;
        if byte & 0x80 == 0 {
            return Ok(Some((value, i + 1)));
        }
        multiplier *= 128;
    }
    if buf.len() >= 4 {
        Err(DecodeError::MalformedVarint)
    } else {
        Ok(None)
    }
}

fn topic_has_wildcards(topic: &str) -> bool {
    topic.contains(['+', '#'])
}

fn put_str(s: &str, out: &mut Vec<u8>) -> Result<(), EncodeError> {
    let len = u16::try_from(s.len()).map_err(|_| EncodeError::StringTooLong(s.len()))?;
    out.extend_from_slice(&len.to_be_bytes());
    out.extend_from_slice(s.as_bytes());
    Ok(())
}

fn check_id(id: u16) -> Result<u16, EncodeError> {
    if id == 0 {
        Err(EncodeError::InvalidPacket("packet id must be non-zero"))
    } else {
        Ok(id)
    }
}

impl Packet {
    /// Bit-exact MQTT 3.1.1 encoding.
    pub fn encode(&self) -> Result<Vec<u8>, EncodeError> {
        let mut out = Vec::new();
        self.encode_into(&mut out)?;
        Ok(out)
    }

    pub fn encode_into(&self, out: &mut Vec<u8>) -> Result<(), EncodeError> {
        let mut body = Vec::new();
        let header = match self {
            Packet::Connect(c) => {
                put_str(PROTOCOL_NAME, &mut body)?;
                body.push(PROTOCOL_LEVEL);
                body.push(if c.clean_session { 0x02 } else { 0x00 });
                body.extend_from_slice(&c.keep_alive_s.to_be_bytes());
                put_str(&c.client_id, &mut body)?;
                0x10
            }
            Packet::ConnAck {
                session_present,
                code,
            } => {
                body.push(u8::from(*session_present));
                body.push(*code as u8);
                0x20
            }
            Packet::Publish(p) => {
                if p.topic.is_empty() || topic_has_wildcards(&p.topic) {
                    return Err(EncodeError::InvalidPacket("publish topic must be a non-empty name without wildcards"));
                }
                put_str(&p.topic, &mut body)?;
                match (p.qos, p.packet_id) {
                    (QoS::AtMostOnce, None) if !p.dup => {}
                    (QoS::AtMostOnce, _) => {
                        return Err(EncodeError::InvalidPacket("QoS 0 publish carries no packet id or dup flag"))
                    }
                    (QoS::AtLeastOnce, Some(id)) => body.extend_from_slice(&check_id(id)?.to_be_bytes()),
                    (QoS::AtLeastOnce, None) => {
                        return Err(EncodeError::InvalidPacket("QoS 1 publish needs a packet id"))
                    }
                }
                body.extend_from_slice(&p.payload);
                0x30 | (u8::from(p.dup) << 3) | ((p.qos as u8) << 1)
            }
            Packet::PubAck(id) => {
                body.extend_from_slice(&check_id(*id)?.to_be_bytes());
                0x40
            }
            Packet::Subscribe { packet_id, filters } => {
                if filters.is_empty() {
                    return Err(EncodeError::InvalidPacket("subscribe needs at least one filter"));
                }
                body.extend_from_slice(&check_id(*packet_id)?.to_be_bytes());
                for (filter, qos) in filters {
                    put_str(filter, &mut body)?;
                    body.push(*qos as u8);
                }
                0x82
            }
            Packet::SubAck { packet_id, codes } => {
                body.extend_from_slice(&check_id(*packet_id)?.to_be_bytes());
                for code in codes {
                    body.push(match code {
                        SubackCode::Granted(q) => *q as u8,
                        SubackCode::Failure => 0x80,
                    });
                }
                0x90
            }
            Packet::PingReq => 0xC0,
            Packet::PingResp => 0xD0,
            Packet::Disconnect => 0xE0,
        };
        if body.len() > MAX_REMAINING_LENGTH {
            return Err(EncodeError::Oversize(body.len()));
        }
        out.push(header);
        encode_remaining_length(body.len(), out)?;
        out.extend_from_slice(&body);
        Ok(())
    }

    /// Decodes one packet from the front of `buf`.
    ///
    /// Returns `Ok(None)` when `buf` holds only a prefix of a packet, otherwise
    /// the packet and the number of bytes it occupied.
    pub fn decode(buf: &[u8]) -> Result<Option<(Packet, usize)>, DecodeError> {
        let Some(&first) = buf.first() else {
            return Ok(None);
        };
        let kind = first >> 4;
        let flags = first & 0x0f;
        let expected_flags = match kind {
            1 | 2 | 4 | 9 | 12 | 13 | 14 => Some(0),
            8 => Some(0b0010),
            3 => None,
            other => return Err(DecodeError::UnknownPacketType(other)),
        };
        if expected_flags.is_some_and(|f| f != flags) {
            return Err(DecodeError::ProtocolViolation("reserved header flags"));
        }

        let Some((len, len_bytes)) = decode_remaining_length(&buf[1..])? else {
            return Ok(None);
        };
        let start = 1 + len_bytes;
        let total = start + len;
        if buf.len() < total {
            return Ok(None);
        }
        let mut r = Reader {
            buf: &buf[start..total],
        };

        let packet = match kind {
            1 => {
                if r.string()? != PROTOCOL_NAME {
                    return Err(DecodeError::ProtocolViolation("protocol name"));
                }
                if r.u8()? != PROTOCOL_LEVEL {
                    return Err(DecodeError::ProtocolViolation("protocol level"));
                }
                let connect_flags = r.u8()?;
                if connect_flags & 0x01 != 0 {
                    return Err(DecodeError::ProtocolViolation("reserved connect flag"));
                }
                if connect_flags & 0xfc != 0 {
                    return Err(DecodeError::ProtocolViolation("will and credentials are not supported"));
                }
                let keep_alive_s = r.u16()?;
                let client_id = r.string()?;
                Packet::Connect(Connect {
                    client_id,
                    keep_alive_s,
                    clean_session: connect_flags & 0x02 != 0,
                })
            }
            2 => {
                let ack_flags = r.u8()?;
                if ack_flags & 0xfe != 0 {
                    return Err(DecodeError::ProtocolViolation("reserved connack flags"));
                }
                let code = ConnectReturnCode::from_u8(r.u8()?)
                    .ok_or(DecodeError::ProtocolViolation("connack return code"))?;
                Packet::ConnAck {
                    session_present: ack_flags == 1,
                    code,
                }
            }
            3 => {
                let dup = flags & 0b1000 != 0;
                // retain (bit 0) is accepted and ignored: no retained messages
                let qos = match (flags >> 1) & 0b11 {
                    0 => QoS::AtMostOnce,
                    1 => QoS::AtLeastOnce,
                    2 => return Err(DecodeError::ProtocolViolation("QoS 2 is not supported")),
                    _ => return Err(DecodeError::ProtocolViolation("QoS 3 is reserved")),
                };
                if dup && qos == QoS::AtMostOnce {
                    return Err(DecodeError::ProtocolViolation("dup set on QoS 0 publish"));
                }
                let topic = r.string()?;
                if topic.is_empty() || topic_has_wildcards(&topic) {
                    return Err(DecodeError::ProtocolViolation("publish topic"));
                }
                let packet_id = match qos {
                    QoS::AtMostOnce => None,
                    QoS::AtLeastOnce => Some(r.packet_id()?),
                };
                Packet::Publish(Publish {
                    topic,
                    payload: r.rest().to_vec(),
                    qos,
                    packet_id,
                    dup,
                })
            }
            4 => Packet::PubAck(r.packet_id()?),
            8 => {
                let packet_id = r.packet_id()?;
                let mut filters = Vec::new();
                while !r.is_empty() {
                    let filter = r.string()?;
                    let qos = match r.u8()? {
                        0 => QoS::AtMostOnce,
                        // QoS 2 requests are granted at most QoS 1
                        1 | 2 => QoS::AtLeastOnce,
                        _ => return Err(DecodeError::ProtocolViolation("subscription options")),
                    };
                    filters.push((filter, qos));
                }
                if filters.is_empty() {
                    return Err(DecodeError::ProtocolViolation("subscribe without filters"));
                }
                Packet::Subscribe { packet_id, filters }
            }
            9 => {
                let packet_id = r.packet_id()?;
                let codes = r
                    .rest()
                    .iter()
                    .map(|b| match b {
                        0x00 => Ok(SubackCode::Granted(QoS::AtMostOnce)),
                        0x01 => Ok(SubackCode::Granted(QoS::AtLeastOnce)),
                        0x80 => Ok(SubackCode::Failure),
                        _ => Err(DecodeError::ProtocolViolation("suback return code")),
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                Packet::SubAck { packet_id, codes }
            }
            12 => Packet::PingReq,
            13 => Packet::PingResp,
            14 => Packet::Disconnect,
            _ => unreachable!("kind filtered above"),
        };
        if !r.is_empty() {
            return Err(DecodeError::ProtocolViolation("trailing bytes in packet"));
        }
        Ok(Some((packet, total)))
    }
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], DecodeError> {
        if self.buf.len() < n {
            return Err(DecodeError::ProtocolViolation("packet body truncated"));
        }
        let (head, tail) = self.buf.split_at(n);
        self.buf = tail;
        Ok(head)
    }

    fn u8(&mut self) -> Result<u8, DecodeError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, DecodeError> {
        let b = self.take(2)?;
        Ok(u16::from_be_bytes([b[0], b[1]]))
    }

    fn packet_id(&mut self) -> Result<u16, DecodeError> {
        match self.u16()? {
            0 => Err(DecodeError::ProtocolViolation("packet id 0")),
            id => Ok(id),
        }
    }

    fn string(&mut self) -> Result<String, DecodeError> {
        let len = usize::from(self.u16()?);
        let bytes = self.take(len)?;
        let s = std::str::from_utf8(bytes)
            .map_err(|_| DecodeError::ProtocolViolation("string is not UTF-8"))?;
        if s.contains('\0') {
            return Err(DecodeError::ProtocolViolation("string contains U+0000"));
        }
        Ok(s.to_string())
    }

    fn rest(&mut self) -> &'a [u8] {
        std::mem::take(&mut self.buf)
    }

    fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }
}
