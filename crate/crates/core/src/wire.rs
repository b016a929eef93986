//! Line-delimited JSON frames between the driver, the mediator and the UI.
//!
//! Every frame is one object on one line with a `kind` field:
//!
//! ```text
//! {"kind":"hello","program":"figtrace"}
//! {"kind":"event","chrono":4,"sync":false,"labels":["r"],"data":{"chrono":4,"delta":"0,4-268435455"},"calls":[]}
//! {"kind":"request","op":"current","attrs":["port","chrono"]}
//! {"kind":"reply","status":"ok","data":{"port":"reduce","chrono":4},"unavailable":[]}
//! {"kind":"bye","events":22}
//! ```

use std::io::{self, BufRead, Write};
use std::sync::mpsc::{self, Receiver, Sender, SyncSender};

use serde_json::{json, Map, Value as Json};
use thiserror::Error;

use crate::intset::IntSet;
use crate::trace::{port_of_name, AttrKey, AttrValue, ValueKind};

/// Analyzer procedure to run for one matched pattern, with the keys of that
/// pattern's `current` actions (its slice of `data`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CallTarget {
    pub label: String,
    pub proc_name: String,
    pub keys: Vec<AttrKey>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceMessage {
    pub chrono: u64,
    pub sync: bool,
    pub labels: Vec<String>,
    pub data: Vec<(AttrKey, AttrValue)>,
    pub calls: Vec<CallTarget>,
}

impl TraceMessage {
    pub fn get(&self, key: AttrKey) -> Option<&AttrValue> {
        self.data.iter().find(|(k, _)| *k == key).map(|(_, v)| v)
    }

    /// The values of `keys` present in `data`, in the order of `keys`.
    pub fn slice(&self, keys: &[AttrKey]) -> Vec<(AttrKey, AttrValue)> {
        keys.iter()
            .filter_map(|k| self.get(*k).map(|v| (*k, v.clone())))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Request {
    Current(Vec<AttrKey>),
    /// Pattern source text, parsed by the driver.
    Add(String),
    Remove(Vec<String>),
    Reset,
    Go,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Reply {
    Ok {
        data: Vec<(AttrKey, AttrValue)>,
        unavailable: Vec<AttrKey>,
    },
    Error {
        reason: String,
    },
}

impl Reply {
    pub fn ok() -> Reply {
        Reply::Ok {
            data: vec![],
            unavailable: vec![],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Frame {
    Hello { program: String },
    Event(TraceMessage),
    Request(Request),
    Reply(Reply),
    Bye { events: u64 },
}

#[derive(Debug, Error)]
pub enum WireError {
    #[error("malformed frame: {0}")]
    Malformed(String),
    #[error("channel closed")]
    ChannelClosed,
    #[error(transparent)]
    Io(#[from] io::Error),
}

fn malformed(s: impl Into<String>) -> WireError {
    WireError::Malformed(s.into())
}

fn encode_value(v: &AttrValue) -> Json {
    match v {
        AttrValue::Int(i) => json!(i),
        AttrValue::Text(s) => json!(s),
        AttrValue::Port(p) => json!(p.name()),
        AttrValue::IntSet(s) => json!(s.to_string()),
        AttrValue::Assoc(pairs) => Json::Array(
            pairs
                .iter()
                .map(|(k, v)| Json::Array(vec![json!(k), encode_value(v)]))
                .collect(),
        ),
    }
}

fn decode_value(key: AttrKey, j: &Json) -> Result<AttrValue, WireError> {
    let bad = || malformed(format!("bad value for `{key}`: {j}"));
    Ok(match key.kind() {
        ValueKind::Int => AttrValue::Int(j.as_i64().ok_or_else(bad)?),
        ValueKind::Text => AttrValue::Text(j.as_str().ok_or_else(bad)?.to_string()),
        ValueKind::Port => {
            AttrValue::Port(port_of_name(j.as_str().ok_or_else(bad)?).map_err(|_| bad())?)
        }
        ValueKind::IntSet => AttrValue::IntSet(decode_intset(j).ok_or_else(bad)?),
        ValueKind::Assoc => {
            let items = j.as_array().ok_or_else(bad)?;
            let mut pairs = Vec::with_capacity(items.len());
            for it in items {
                let pair = it.as_array().filter(|p| p.len() == 2).ok_or_else(bad)?;
                let k = pair[0].as_str().ok_or_else(bad)?.to_string();
                let v = match &pair[1] {
                    Json::Number(n) => AttrValue::Int(n.as_i64().ok_or_else(bad)?),
                    s @ Json::String(_) => AttrValue::IntSet(decode_intset(s).ok_or_else(bad)?),
                    _ => return Err(bad()),
                };
                pairs.push((k, v));
            }
            AttrValue::Assoc(pairs)
        }
    })
}

fn decode_intset(j: &Json) -> Option<IntSet> {
    j.as_str()?.parse().ok()
}

fn encode_data(data: &[(AttrKey, AttrValue)]) -> Json {
    let mut m = Map::new();
    for (k, v) in data {
        m.insert(k.name().to_string(), encode_value(v));
    }
    Json::Object(m)
}

fn decode_data(j: &Json) -> Result<Vec<(AttrKey, AttrValue)>, WireError> {
    let m = j
        .as_object()
        .ok_or_else(|| malformed("data is not an object"))?;
    m.iter()
        .map(|(k, v)| {
            let key = AttrKey::from_name(k)
                .ok_or_else(|| malformed(format!("unknown attribute `{k}`")))?;
            Ok((key, decode_value(key, v)?))
        })
        .collect()
}

fn keys_json(keys: &[AttrKey]) -> Json {
    Json::Array(keys.iter().map(|k| json!(k.name())).collect())
}

fn decode_keys(j: &Json) -> Result<Vec<AttrKey>, WireError> {
    j.as_array()
        .ok_or_else(|| malformed("expected a list of attributes"))?
        .iter()
        .map(|k| {
            k.as_str()
                .and_then(AttrKey::from_name)
                .ok_or_else(|| malformed(format!("unknown attribute {k}")))
        })
        .collect()
}

fn decode_strings(j: &Json) -> Result<Vec<String>, WireError> {
    j.as_array()
        .ok_or_else(|| malformed("expected a list of strings"))?
        .iter()
        .map(|s| {
            s.as_str()
                .map(str::to_string)
                .ok_or_else(|| malformed("expected a string"))
        })
        .collect()
}

fn frame_json(f: &Frame) -> Json {
    let mut m = Map::new();
    let mut put = |k: &str, v: Json| {
        m.insert(k.to_string(), v);
    };
    match f {
        Frame::Hello { program } => {
            put("kind", json!("hello"));
            put("program", json!(program));
        }
        Frame::Event(msg) => {
            put("kind", json!("event"));
            put("chrono", json!(msg.chrono));
            put("sync", json!(msg.sync));
            put("labels", json!(msg.labels));
            put("data", encode_data(&msg.data));
            let calls: Vec<Json> = msg
                .calls
                .iter()
                .map(|c| json!({"label": c.label, "proc": c.proc_name, "keys": keys_json(&c.keys)}))
                .collect();
            put("calls", Json::Array(calls));
        }
        Frame::Request(r) => {
            put("kind", json!("request"));
            match r {
                Request::Go => put("op", json!("go")),
                Request::Reset => put("op", json!("reset")),
                Request::Current(keys) => {
                    put("op", json!("current"));
                    put("attrs", keys_json(keys));
                }
                Request::Add(src) => {
                    put("op", json!("add"));
                    put("patterns", json!(src));
                }
                Request::Remove(labels) => {
                    put("op", json!("remove"));
                    put("labels", json!(labels));
                }
            }
        }
        Frame::Reply(Reply::Ok { data, unavailable }) => {
            put("kind", json!("reply"));
            put("status", json!("ok"));
            put("data", encode_data(data));
            put("unavailable", keys_json(unavailable));
        }
        Frame::Reply(Reply::Error { reason }) => {
            put("kind", json!("reply"));
            put("status", json!("error"));
            put("reason", json!(reason));
        }
        Frame::Bye { events } => {
            put("kind", json!("bye"));
            put("events", json!(events));
        }
    }
    Json::Object(m)
}

/// One frame as a single line, without the trailing newline.
pub fn encode_frame(f: &Frame) -> String {
    frame_json(f).to_string()
}

pub fn decode_frame(line: &str) -> Result<Frame, WireError> {
    let j: Json = serde_json::from_str(line.trim_end_matches(['\n', '\r']))
        .map_err(|e| malformed(e.to_string()))?;
    let field = |k: &str| j.get(k).ok_or_else(|| malformed(format!("missing `{k}`")));
    let kind = field("kind")?.as_str().ok_or_else(|| malformed("kind"))?;
    Ok(match kind {
        "hello" => Frame::Hello {
            program: field("program")?.as_str().unwrap_or_default().to_string(),
        },
        "bye" => Frame::Bye {
            events: field("events")?
                .as_u64()
                .ok_or_else(|| malformed("events"))?,
        },
        "event" => {
            let calls = field("calls")?
                .as_array()
                .ok_or_else(|| malformed("calls"))?
                .iter()
                .map(|c| {
                    let s = |k: &str| {
                        c.get(k)
                            .and_then(Json::as_str)
                            .map(str::to_string)
                            .ok_or_else(|| malformed(format!("call without `{k}`")))
                    };
                    Ok(CallTarget {
                        label: s("label")?,
                        proc_name: s("proc")?,
                        keys: decode_keys(c.get("keys").unwrap_or(&Json::Array(vec![])))?,
                    })
                })
                .collect::<Result<_, WireError>>()?;
            Frame::Event(TraceMessage {
                chrono: field("chrono")?
                    .as_u64()
                    .ok_or_else(|| malformed("chrono"))?,
                sync: field("sync")?.as_bool().ok_or_else(|| malformed("sync"))?,
                labels: decode_strings(field("labels")?)?,
                data: decode_data(field("data")?)?,
                calls,
            })
        }
        "request" => {
            let op = field("op")?.as_str().ok_or_else(|| malformed("op"))?;
            Frame::Request(match op {
                "go" => Request::Go,
                "reset" => Request::Reset,
                "current" => Request::Current(decode_keys(field("attrs")?)?),
                "add" => Request::Add(
                    field("patterns")?
                        .as_str()
                        .ok_or_else(|| malformed("patterns"))?
                        .to_string(),
                ),
                "remove" => Request::Remove(decode_strings(field("labels")?)?),
                other => return Err(malformed(format!("unknown request `{other}`"))),
            })
        }
        "reply" => Frame::Reply(match field("status")?.as_str() {
            Some("ok") => Reply::Ok {
                data: decode_data(field("data")?)?,
                unavailable: decode_keys(field("unavailable")?)?,
            },
            Some("error") => Reply::Error {
                reason: field("reason")?.as_str().unwrap_or_default().to_string(),
            },
            _ => return Err(malformed("status")),
        }),
        other => return Err(malformed(format!("unknown kind `{other}`"))),
    })
}

pub fn encode_event(m: &TraceMessage) -> String {
    encode_frame(&Frame::Event(m.clone()))
}

pub fn decode_event(line: &str) -> Result<TraceMessage, WireError> {
    match decode_frame(line)? {
        Frame::Event(m) => Ok(m),
        _ => Err(malformed("not an event frame")),
    }
}

pub fn encode_request(r: &Request) -> String {
    encode_frame(&Frame::Request(r.clone()))
}

pub fn decode_request(line: &str) -> Result<Request, WireError> {
    match decode_frame(line)? {
        Frame::Request(r) => Ok(r),
        _ => Err(malformed("not a request frame")),
    }
}

/// Driver side of the connection.
pub trait Link {
    fn send(&mut self, frame: Frame) -> Result<(), WireError>;
    /// Blocks for the next request (only called while frozen).
    fn recv(&mut self) -> Result<Request, WireError>;
    /// Encoded bytes sent so far, when the transport encodes.
    fn bytes_sent(&self) -> u64 {
        0
    }
}

/// Mediator side of the connection.
pub trait Endpoint {
    /// Next frame from the driver; `None` once the driver is gone.
    fn recv(&mut self) -> Result<Option<Frame>, WireError>;
    fn send(&mut self, r: Request) -> Result<(), WireError>;
}

impl<L: Link + ?Sized> Link for &mut L {
    fn send(&mut self, frame: Frame) -> Result<(), WireError> {
        (**self).send(frame)
    }
    fn recv(&mut self) -> Result<Request, WireError> {
        (**self).recv()
    }
    fn bytes_sent(&self) -> u64 {
        (**self).bytes_sent()
    }
}

/// In-process link. The frame queue is bounded: a full queue blocks the
/// solver thread until the mediator catches up.
pub struct ChannelLink {
    tx: SyncSender<Frame>,
    rx: Receiver<Request>,
}

pub struct ChannelEndpoint {
    rx: Receiver<Frame>,
    tx: Sender<Request>,
}

pub fn channel(bound: usize) -> (ChannelLink, ChannelEndpoint) {
    let (ftx, frx) = mpsc::sync_channel(bound);
    let (rtx, rrx) = mpsc::channel();
    (
        ChannelLink { tx: ftx, rx: rrx },
        ChannelEndpoint { rx: frx, tx: rtx },
    )
}

impl Link for ChannelLink {
    fn send(&mut self, frame: Frame) -> Result<(), WireError> {
        self.tx.send(frame).map_err(|_| WireError::ChannelClosed)
    }
    fn recv(&mut self) -> Result<Request, WireError> {
        self.rx.recv().map_err(|_| WireError::ChannelClosed)
    }
}

impl Endpoint for ChannelEndpoint {
    fn recv(&mut self) -> Result<Option<Frame>, WireError> {
        Ok(self.rx.recv().ok())
    }
    fn send(&mut self, r: Request) -> Result<(), WireError> {
        self.tx.send(r).map_err(|_| WireError::ChannelClosed)
    }
}

/// Encodes frames onto a byte stream (pipe or socket).
pub struct StreamLink<R, W> {
    reader: R,
    writer: W,
    bytes: u64,
    line: String,
}

impl<R: BufRead, W: Write> StreamLink<R, W> {
    pub fn new(reader: R, writer: W) -> Self {
        StreamLink {
            reader,
            writer,
            bytes: 0,
            line: String::new(),
        }
    }
}

fn write_frame<W: Write>(w: &mut W, f: &Frame) -> Result<u64, WireError> {
    let mut s = encode_frame(f);
    s.push('\n');
    w.write_all(s.as_bytes()).map_err(closed_or_io)?;
    Ok(s.len() as u64)
}

fn closed_or_io(e: io::Error) -> WireError {
    if e.kind() == io::ErrorKind::BrokenPipe {
        WireError::ChannelClosed
    } else {
        WireError::Io(e)
    }
}

fn read_line<R: BufRead>(r: &mut R, buf: &mut String) -> Result<bool, WireError> {
    buf.clear();
    loop {
        let n = r.read_line(buf).map_err(closed_or_io)?;
        if n == 0 {
            return Ok(false);
        }
        if !buf.trim().is_empty() {
            return Ok(true);
        }
        buf.clear();
    }
}

impl<R: BufRead, W: Write> Link for StreamLink<R, W> {
    fn send(&mut self, frame: Frame) -> Result<(), WireError> {
        let sync = matches!(&frame, Frame::Event(m) if m.sync);
        self.bytes += write_frame(&mut self.writer, &frame)?;
        if sync || !matches!(frame, Frame::Event(_)) {
            self.writer.flush().map_err(closed_or_io)?;
        }
        Ok(())
    }

    fn recv(&mut self) -> Result<Request, WireError> {
        self.writer.flush().map_err(closed_or_io)?;
        if !read_line(&mut self.reader, &mut self.line)? {
            return Err(WireError::ChannelClosed);
        }
        decode_request(&self.line)
    }

    fn bytes_sent(&self) -> u64 {
        self.bytes
    }
}

pub struct StreamEndpoint<R, W> {
    reader: R,
    writer: W,
    line: String,
}

impl<R: BufRead, W: Write> StreamEndpoint<R, W> {
    pub fn new(reader: R, writer: W) -> Self {
        StreamEndpoint {
            reader,
            writer,
            line: String::new(),
        }
    }
}

impl<R: BufRead, W: Write> Endpoint for StreamEndpoint<R, W> {
    fn recv(&mut self) -> Result<Option<Frame>, WireError> {
        if !read_line(&mut self.reader, &mut self.line)? {
            return Ok(None);
        }
        decode_frame(&self.line).map(Some)
    }

    fn send(&mut self, r: Request) -> Result<(), WireError> {
        write_frame(&mut self.writer, &Frame::Request(r))?;
        self.writer.flush().map_err(closed_or_io)
    }
}

/// Sink: encodes every frame, counts it, and answers `go` to every
/// synchronous message.
#[derive(Debug, Default)]
pub struct NullLink {
    pub bytes: u64,
    pub frames: u64,
    pub events: u64,
    buf: Vec<u8>,
}

impl NullLink {
    pub fn new() -> Self {
        Self::default()
    }
}

impl Link for NullLink {
    fn send(&mut self, frame: Frame) -> Result<(), WireError> {
        self.buf.clear();
        serde_json::to_writer(&mut self.buf, &frame_json(&frame))
            .map_err(|e| malformed(e.to_string()))?;
        self.bytes += self.buf.len() as u64 + 1;
        self.frames += 1;
        if matches!(frame, Frame::Event(_)) {
            self.events += 1;
        }
        Ok(())
    }

    fn recv(&mut self) -> Result<Request, WireError> {
        Ok(Request::Go)
    }

    fn bytes_sent(&self) -> u64 {
        self.bytes
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::Port;

    fn fig6_event4() -> TraceMessage {
        TraceMessage {
            chrono: 4,
            sync: false,
            labels: vec!["r".into()],
            data: vec![
                (AttrKey::Chrono, AttrValue::Int(4)),
                (
                    AttrKey::Delta,
                    AttrValue::IntSet(IntSet::from_intervals([(0, 0), (4, 268435455)])),
                ),
            ],
            calls: vec![],
        }
    }

    #[test]
    fn event_frame_bytes() {
        let s = encode_event(&fig6_event4());
        assert_eq!(
            s,
            r#"{"kind":"event","chrono":4,"sync":false,"labels":["r"],"data":{"chrono":4,"delta":"0,4-268435455"},"calls":[]}"#
        );
        assert_eq!(decode_event(&s).unwrap(), fig6_event4());
    }

    #[test]
    fn empty_sync_roundtrip() {
        let m = TraceMessage {
            chrono: 9,
            sync: true,
            labels: vec!["a".into()],
            data: vec![],
            calls: vec![CallTarget {
                label: "a".into(),
                proc_name: "f".into(),
                keys: vec![AttrKey::Port],
            }],
        };
        assert_eq!(decode_event(&encode_event(&m)).unwrap(), m);
    }

    #[test]
    fn truncated() {
        let s = encode_event(&fig6_event4());
        assert!(matches!(
            decode_event(&s[..s.len() - 5]),
            Err(WireError::Malformed(_))
        ));
    }

    #[test]
    fn requests() {
        assert_eq!(
            encode_request(&Request::Go),
            r#"{"kind":"request","op":"go"}"#
        );
        for r in [
            Request::Go,
            Request::Reset,
            Request::Current(vec![AttrKey::Port, AttrKey::Chrono]),
            Request::Add("s: when true do_synchro call(f)".into()),
            Request::Remove(vec!["a".into(), "b".into()]),
        ] {
            assert_eq!(decode_request(&encode_request(&r)).unwrap(), r);
        }
    }

    #[test]
    fn assoc_and_reply() {
        let r = Reply::Ok {
            data: vec![
                (AttrKey::Port, AttrValue::Port(Port::Reduce)),
                (
                    AttrKey::VarC,
                    AttrValue::Assoc(vec![("v2".into(), AttrValue::Int(2))]),
                ),
                (
                    AttrKey::NamedVars,
                    AttrValue::Assoc(vec![("a".into(), AttrValue::IntSet(IntSet::range(2, 5)))]),
                ),
            ],
            unavailable: vec![AttrKey::Delta],
        };
        let f = Frame::Reply(r);
        assert_eq!(decode_frame(&encode_frame(&f)).unwrap(), f);
    }
}
