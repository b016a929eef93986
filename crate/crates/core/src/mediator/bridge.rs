//! Socket bridge for a debugger UI. Frames exchanged with the driver are
//! mirrored to the UI; lines coming back from the UI are console commands.

use std::io::{self, BufRead, BufReader};
use std::net::{TcpListener, TcpStream};
use std::sync::mpsc::{self, Receiver};
use std::thread::{self, JoinHandle};

use serde_json::Value as Json;

use crate::wire::{decode_request, Request};

/// A connected UI client.
pub struct UiBridge {
    /// Console command lines posted by the UI, in arrival order.
    pub commands: Receiver<String>,
    /// Write half of the socket; hand it to [`super::Mediator::set_mirror`].
    pub mirror: TcpStream,
    pub reader: JoinHandle<()>,
}

/// Maps one UI line to a console command. The UI sends either
/// `{"kind":"request","op":"console","line":"step"}` or a plain request frame.
pub fn ui_command(line: &str) -> Option<String> {
    let line = line.trim();
    if line.is_empty() {
        return None;
    }
    if let Ok(j) = serde_json::from_str::<Json>(line) {
        if j.get("op").and_then(Json::as_str) == Some("console") {
            return j.get("line").and_then(Json::as_str).map(str::to_string);
        }
    }
    let r = decode_request(line).ok()?;
    Some(match r {
        Request::Go => "go".to_string(),
        Request::Reset => "reset".to_string(),
        Request::Add(src) => format!("add {}", src.replace('\n', " ")),
        Request::Remove(labels) => format!("remove {}", labels.join(" ")),
        Request::Current(keys) => {
            let names: Vec<&str> = keys.iter().map(|k| k.name()).collect();
            format!("current {}", names.join(" "))
        }
    })
}

/// Waits for one UI client on `listener`.
pub fn accept_ui(listener: &TcpListener) -> io::Result<UiBridge> {
    let (stream, peer) = listener.accept()?;
    log::info!("ui connected from {peer}");
    stream.set_nodelay(true)?;
    let read_half = stream.try_clone()?;
    let (tx, rx) = mpsc::channel();
    let reader = thread::spawn(move || {
        for line in BufReader::new(read_half).lines() {
            let Ok(line) = line else { break };
            match ui_command(&line) {
                Some(cmd) => {
                    if tx.send(cmd).is_err() {
                        break;
                    }
                }
                None if line.trim().is_empty() => {}
                None => log::warn!("ignoring ui line: {line}"),
            }
        }
    });
    Ok(UiBridge {
        commands: rx,
        mirror: stream,
        reader,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::AttrKey;
    use crate::wire::encode_request;
    use std::io::Write;

    #[test]
    fn maps_requests() {
        assert_eq!(
            ui_command(r#"{"kind":"request","op":"console","line":"skipred"}"#).as_deref(),
            Some("skipred")
        );
        assert_eq!(
            ui_command(&encode_request(&Request::Go)).as_deref(),
            Some("go")
        );
        let cur = encode_request(&Request::Current(vec![AttrKey::Port, AttrKey::Chrono]));
        assert_eq!(ui_command(&cur).as_deref(), Some("current port chrono"));
        assert_eq!(ui_command("garbage"), None);
    }

    #[test]
    fn socket_round_trip() {
        let l = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = l.local_addr().unwrap();
        let client = thread::spawn(move || {
            let mut s = TcpStream::connect(addr).unwrap();
            writeln!(s, r#"{{"kind":"request","op":"console","line":"step"}}"#).unwrap();
            writeln!(s, "{}", encode_request(&Request::Reset)).unwrap();
            let mut first = String::new();
            BufReader::new(s.try_clone().unwrap())
                .read_line(&mut first)
                .unwrap();
            first
        });
        let mut b = accept_ui(&l).unwrap();
        assert_eq!(b.commands.recv().unwrap(), "step");
        assert_eq!(b.commands.recv().unwrap(), "reset");
        writeln!(b.mirror, r#"{{"kind":"hello","program":"queens(4)"}}"#).unwrap();
        assert!(client.join().unwrap().contains("queens(4)"));
        drop(b.mirror);
        b.reader.join().unwrap();
        assert!(b.commands.recv().is_err());
    }
}
