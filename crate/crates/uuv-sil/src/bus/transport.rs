//! Links between the agent and the vehicle server.
//!
//! All three transports carry the same messages in the same order: the
//! direct link calls the endpoint in place, the channel link runs it on a
//! thread behind encoded lines, and the TCP link runs it behind a loopback
//! socket. Only the agent side records the transcript, so the transcript
//! does not depend on the transport.

use super::codec::{decode, encode, LineFramer};
use super::message::TypedMessage;
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::mpsc;
use std::thread::JoinHandle;
use thiserror::Error;

/// Prefix of a line reporting a server-side failure.
const ERROR_PREFIX: &str = "#error ";

#[derive(Debug, Error)]
pub enum BusError {
    #[error("codec: {0}")]
    Codec(String),
    #[error("peer failed: {0}")]
    Remote(String),
    #[error("link closed")]
    Closed,
    #[error("no message pending")]
    Empty,
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// The server side of a link.
pub trait Endpoint: Send {
    /// Messages emitted on connect.
    fn on_start(&mut self) -> Vec<TypedMessage>;
    fn on_message(&mut self, msg: &TypedMessage) -> Result<Vec<TypedMessage>, String>;
}

/// The client side of a link.
pub trait Link {
    fn send(&mut self, msg: &TypedMessage) -> Result<(), BusError>;
    /// Next message from the server; blocks on threaded links.
    fn recv(&mut self) -> Result<TypedMessage, BusError>;
    /// Shut down and join the server.
    fn close(self: Box<Self>) -> Result<(), BusError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransportKind {
    #[default]
    Direct,
    Channel,
    Tcp,
}

impl std::str::FromStr for TransportKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "direct" => Ok(Self::Direct),
            "channel" => Ok(Self::Channel),
            "tcp" => Ok(Self::Tcp),
            _ => Err(format!("unknown transport {s:?} (direct, channel, tcp)")),
        }
    }
}

/// Build a link of the given kind around `endpoint`. `port` 0 picks a free
/// loopback port.
pub fn connect<E: Endpoint + 'static>(kind: TransportKind, endpoint: E, port: u16) -> Result<Box<dyn Link>, BusError> {
    Ok(match kind {
        TransportKind::Direct => Box::new(DirectLink::new(endpoint)),
        TransportKind::Channel => Box::new(ChannelLink::spawn(endpoint)),
        TransportKind::Tcp => Box::new(TcpLink::spawn(endpoint, port)?),
    })
}

pub struct DirectLink<E> {
    endpoint: E,
    inbox: VecDeque<TypedMessage>,
}

impl<E: Endpoint> DirectLink<E> {
    pub fn new(mut endpoint: E) -> Self {
        let inbox = endpoint.on_start().into();
        Self { endpoint, inbox }
    }
}

impl<E: Endpoint> Link for DirectLink<E> {
    fn send(&mut self, msg: &TypedMessage) -> Result<(), BusError> {
        let out = self.endpoint.on_message(msg).map_err(BusError::Remote)?;
        self.inbox.extend(out);
        Ok(())
    }

    fn recv(&mut self) -> Result<TypedMessage, BusError> {
        self.inbox.pop_front().ok_or(BusError::Empty)
    }

    fn close(self: Box<Self>) -> Result<(), BusError> {
        Ok(())
    }
}

/// Serve one line-oriented peer until it hangs up. Replies are written
/// through `emit`; a failure is reported once and ends the session.
fn serve_lines<E: Endpoint>(
    endpoint: &mut E,
    lines: impl Iterator<Item = String>,
    mut emit: impl FnMut(String) -> bool,
) {
    for m in endpoint.on_start() {
        if !encode(&m).is_ok_and(&mut emit) {
            return;
        }
    }
    for line in lines {
        let replies = decode(&line)
            .map_err(|e| e.to_string())
            .and_then(|m| endpoint.on_message(&m));
        let replies = match replies {
            Ok(r) => r,
            Err(e) => {
                emit(format!("{ERROR_PREFIX}{}", e.replace('\n', " ")));
                return;
            }
        };
        for m in replies {
            let ok = match encode(&m) {
                Ok(l) => emit(l),
                Err(e) => {
                    emit(format!("{ERROR_PREFIX}{e}"));
                    false
                }
            };
            if !ok {
                return;
            }
        }
    }
}

fn parse_line(line: &str) -> Result<TypedMessage, BusError> {
    if let Some(e) = line.strip_prefix(ERROR_PREFIX) {
        return Err(BusError::Remote(e.to_string()));
    }
    decode(line).map_err(|e| BusError::Codec(e.to_string()))
}

pub struct ChannelLink {
    tx: Option<mpsc::Sender<String>>,
    rx: mpsc::Receiver<String>,
    server: Option<JoinHandle<()>>,
}

impl ChannelLink {
    pub fn spawn<E: Endpoint + 'static>(mut endpoint: E) -> Self {
        let (to_server, server_rx) = mpsc::channel::<String>();
        let (server_tx, from_server) = mpsc::channel::<String>();
        let server = std::thread::spawn(move || {
            serve_lines(&mut endpoint, server_rx.into_iter(), |l| server_tx.send(l).is_ok());
        });
        Self {
            tx: Some(to_server),
            rx: from_server,
            server: Some(server),
        }
    }
}

impl Link for ChannelLink {
    fn send(&mut self, msg: &TypedMessage) -> Result<(), BusError> {
        let line = encode(msg).map_err(|e| BusError::Codec(e.to_string()))?;
        self.tx
            .as_ref()
            .ok_or(BusError::Closed)?
            .send(line)
            .map_err(|_| BusError::Closed)
    }

    fn recv(&mut self) -> Result<TypedMessage, BusError> {
        let line = self.rx.recv().map_err(|_| BusError::Closed)?;
        parse_line(&line)
    }

    fn close(mut self: Box<Self>) -> Result<(), BusError> {
        self.tx.take();
        if let Some(h) = self.server.take() {
            h.join()
                .map_err(|_| BusError::Remote("server thread panicked".into()))?;
        }
        Ok(())
    }
}

pub struct TcpLink {
    stream: TcpStream,
    framer: LineFramer,
    pending: VecDeque<String>,
    server: Option<JoinHandle<()>>,
}

impl TcpLink {
    /// Bind a loopback server for `endpoint`, then connect to it.
    pub fn spawn<E: Endpoint + 'static>(mut endpoint: E, port: u16) -> Result<Self, BusError> {
        let listener = TcpListener::bind(("127.0.0.1", port))?;
        let addr = listener.local_addr()?;
        let server = std::thread::spawn(move || {
            let Ok((stream, _)) = listener.accept() else {
                return;
            };
            let _ = stream.set_nodelay(true);
            let Ok(mut writer) = stream.try_clone() else {
                return;
            };
            let lines = BufReader::new(stream).lines().map_while(Result::ok);
            serve_lines(&mut endpoint, lines, |l| {
                writer.write_all(format!("{l}\n").as_bytes()).is_ok()
            });
        });
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        Ok(Self {
            stream,
            framer: LineFramer::default(),
            pending: VecDeque::new(),
            server: Some(server),
        })
    }
}

impl Link for TcpLink {
    fn send(&mut self, msg: &TypedMessage) -> Result<(), BusError> {
        let line = encode(msg).map_err(|e| BusError::Codec(e.to_string()))?;
        self.stream.write_all(format!("{line}\n").as_bytes())?;
        Ok(())
    }

    fn recv(&mut self) -> Result<TypedMessage, BusError> {
        let mut buf = [0u8; 8192];
        while self.pending.is_empty() {
            let n = self.stream.read(&mut buf)?;
            if n == 0 {
                return Err(BusError::Closed);
            }
            self.pending.extend(self.framer.push(&buf[..n]));
        }
        let line = self.pending.pop_front().expect("non-empty");
        parse_line(&line)
    }

    fn close(mut self: Box<Self>) -> Result<(), BusError> {
        let _ = self.stream.shutdown(std::net::Shutdown::Both);
        if let Some(h) = self.server.take() {
            h.join()
                .map_err(|_| BusError::Remote("server thread panicked".into()))?;
        }
        Ok(())
    }
}
