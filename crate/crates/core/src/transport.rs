//! Shaped sender and receiver over TCP.
//!
//! A [`Sender`] owns a connection and a sending thread that runs the shaper:
//! sample a delay, sleep, sample a size, write one record. Cover records flow
//! as soon as shaping starts, whether or not anything was sent. The loop
//! does not compensate for time spent writing, so the achieved record rate
//! sits slightly below `1 / E[D]`; if the peer applies backpressure the loop
//! falls behind schedule rather than bursting to catch up.
//!
//! Padding and cover bytes come from OS randomness; the config seed only
//! drives the delay/size schedule.

use std::fmt;
use std::io::{self, BufReader, Read, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::{Arc, Mutex, MutexGuard};
use std::thread::{self, JoinHandle};

use rand::rngs::OsRng;
use rand::TryRngCore;
use thiserror::Error;

use crate::config::ShaperConfig;
use crate::shaper::{FillSource, Reassembled, Reassembler, ReassemblyError, Shaper, ShaperError};
use crate::wire::{read_record, WireError};

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("cannot connect to {endpoint}: {source}")]
    Connect {
        endpoint: String,
        #[source]
        source: io::Error,
    },
    #[error("shaping already started")]
    AlreadyStarted,
    #[error(transparent)]
    Shaper(#[from] ShaperError),
    #[error("sending loop failed: {0}")]
    Loop(#[source] Arc<io::Error>),
    #[error(transparent)]
    Wire(#[from] WireError),
    #[error(transparent)]
    Reassembly(#[from] ReassemblyError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LoopStatus {
    NotStarted,
    Running,
    Draining,
    Closed,
}

struct Inner {
    shaper: Shaper,
    status: LoopStatus,
    failure: Option<Arc<io::Error>>,
    abort: bool,
    records_sent: u64,
}

struct Shared {
    inner: Mutex<Inner>,
}

impl Shared {
    fn lock(&self) -> MutexGuard<'_, Inner> {
        // A panic in the loop must not wedge close(); the state is still sound.
        self.inner.lock().unwrap_or_else(|e| e.into_inner())
    }
}

/// A fresh schedule seed from OS randomness, for live senders that were not
/// given one.
pub fn random_seed() -> u64 {
    OsRng.try_next_u64().expect("OS random source unavailable")
}

/// Sending half. All methods take `&self`, so one handle can be shared between
/// the thread producing messages and the one that eventually closes.
pub struct Sender {
    peer: SocketAddr,
    shared: Arc<Shared>,
    stream: TcpStream,
    worker: Mutex<Option<JoinHandle<()>>>,
}

impl fmt::Debug for Sender {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Sender")
            .field("peer", &self.peer)
            .field("status", &self.status())
            .finish()
    }
}

impl Sender {
    /// Connects to `host:port`. Shaping does not begin until [`Sender::start`].
    pub fn connect(host: &str, port: u16, config: ShaperConfig) -> Result<Self, TransportError> {
        let endpoint = format!("{host}:{port}");
        let connect_err = |source| TransportError::Connect {
            endpoint: endpoint.clone(),
            source,
        };
        let addrs: Vec<SocketAddr> = (host, port)
            .to_socket_addrs()
            .map_err(connect_err)?
            .collect();
        let mut last = io::Error::new(io::ErrorKind::NotFound, "no addresses resolved");
        for addr in addrs {
            match TcpStream::connect(addr) {
                Ok(stream) => return Self::from_stream(stream, config).map_err(connect_err),
                Err(e) => last = e,
            }
        }
        Err(connect_err(last))
    }

    /// Wraps an already-connected stream.
    pub fn from_stream(stream: TcpStream, config: ShaperConfig) -> io::Result<Self> {
        // One record per observable write.
        stream.set_nodelay(true)?;
        let peer = stream.peer_addr()?;
        Ok(Self {
            peer,
            shared: Arc::new(Shared {
                inner: Mutex::new(Inner {
                    shaper: Shaper::with_fill(config, FillSource::Os),
                    status: LoopStatus::NotStarted,
                    failure: None,
                    abort: false,
                    records_sent: 0,
                }),
            }),
            stream,
            worker: Mutex::new(None),
        })
    }

    pub fn peer_addr(&self) -> SocketAddr {
        self.peer
    }

    pub fn status(&self) -> LoopStatus {
        self.shared.lock().status
    }

    pub fn queued_bytes(&self) -> usize {
        self.shared.lock().shaper.queued_bytes()
    }

    pub fn records_sent(&self) -> u64 {
        self.shared.lock().records_sent
    }

    /// Starts the sending loop; call once, ideally before the first send.
    pub fn start(&self) -> Result<(), TransportError> {
        let mut inner = self.shared.lock();
        if inner.status != LoopStatus::NotStarted {
            return Err(TransportError::AlreadyStarted);
        }
        self.spawn(&mut inner)
    }

    fn spawn(&self, inner: &mut Inner) -> Result<(), TransportError> {
        let stream = self.stream.try_clone()?;
        let shared = Arc::clone(&self.shared);
        let handle = thread::Builder::new()
            .name("linkpad-sender".into())
            .spawn(move || sending_loop(shared, stream))?;
        *self.worker.lock().unwrap_or_else(|e| e.into_inner()) = Some(handle);
        inner.status = LoopStatus::Running;
        Ok(())
    }

    /// Queues `msg` and returns without waiting for transmission.
    pub fn send(&self, msg: impl Into<Vec<u8>>) -> Result<(), TransportError> {
        let mut inner = self.shared.lock();
        if let Some(err) = &inner.failure {
            return Err(TransportError::Loop(Arc::clone(err)));
        }
        match inner.status {
            LoopStatus::NotStarted | LoopStatus::Running => {
                inner.shaper.enqueue(msg.into())?;
                Ok(())
            }
            LoopStatus::Draining | LoopStatus::Closed => Err(ShaperError::Closed.into()),
        }
    }

    /// Drains the queue, writes the stream_end record and shuts the
    /// connection down. Blocks until done; a second call returns at once.
    ///
    /// Closing a sender that was never started starts it first, so anything
    /// already queued is still delivered.
    pub fn close(&self) -> Result<(), TransportError> {
        {
            let mut inner = self.shared.lock();
            match inner.status {
                LoopStatus::Closed => return Ok(()),
                LoopStatus::NotStarted => {
                    inner.shaper.begin_close();
                    self.spawn(&mut inner)?;
                }
                LoopStatus::Running | LoopStatus::Draining => inner.shaper.begin_close(),
            }
            inner.status = LoopStatus::Draining;
        }
        let worker = self.worker.lock().unwrap_or_else(|e| e.into_inner()).take();
        if let Some(handle) = worker {
            // The loop records its own failures; a panic there is a bug.
            handle.join().expect("sending loop panicked");
        }
        let _ = self.stream.shutdown(Shutdown::Write);
        let mut inner = self.shared.lock();
        inner.status = LoopStatus::Closed;
        match inner.failure.take() {
            Some(err) => Err(TransportError::Loop(err)),
            None => Ok(()),
        }
    }
}

impl Drop for Sender {
    /// Dropping without `close` abandons the queue and stops the loop.
    fn drop(&mut self) {
        self.shared.lock().abort = true;
        if let Some(handle) = self.worker.get_mut().ok().and_then(Option::take) {
            let _ = handle.join();
        }
    }
}

fn sending_loop(shared: Arc<Shared>, mut stream: TcpStream) {
    let mut frame = Vec::new();
    loop {
        let pending = {
            let mut inner = shared.lock();
            if inner.abort {
                return;
            }
            inner.shaper.begin_tick()
        };
        thread::sleep(pending.delay());
        let out = {
            let mut inner = shared.lock();
            if inner.abort {
                return;
            }
            inner.shaper.complete_tick(pending)
        };
        frame.clear();
        out.record.write_to(&mut frame);
        let written = stream.write_all(&frame).and_then(|()| stream.flush());
        let mut inner = shared.lock();
        match written {
            Ok(()) => inner.records_sent += 1,
            Err(e) => {
                inner.failure = Some(Arc::new(e));
                return;
            }
        }
        if out.end_of_stream {
            return;
        }
    }
}

/// Receiving half: yields the sender's messages in order, with cover records
/// and padding removed.
pub struct Receiver<R = TcpStream> {
    reader: BufReader<R>,
    assembly: Reassembler,
    done: bool,
}

impl Receiver<TcpStream> {
    /// Accepts one connection from `listener`.
    pub fn accept(listener: &TcpListener) -> io::Result<Self> {
        let (stream, _) = listener.accept()?;
        Ok(Self::new(stream))
    }
}

impl<R: Read> Receiver<R> {
    pub fn new(source: R) -> Self {
        Self::with_assembly(source, Reassembler::new())
    }

    pub fn with_assembly(source: R, assembly: Reassembler) -> Self {
        Self {
            reader: BufReader::new(source),
            assembly,
            done: false,
        }
    }

    /// Blocks until the next complete message arrives. Returns `Ok(None)`
    /// after the sender's clean close.
    pub fn recv(&mut self) -> Result<Option<Vec<u8>>, TransportError> {
        if self.done {
            return Ok(None);
        }
        loop {
            let Some(record) = read_record(&mut self.reader)? else {
                let err = self
                    .assembly
                    .finish()
                    .expect_err("recv returns early after stream_end");
                return Err(err.into());
            };
            match self.assembly.push(&record)? {
                Some(Reassembled::Message(m)) => return Ok(Some(m)),
                Some(Reassembled::End) => {
                    self.done = true;
                    return Ok(None);
                }
                None => {}
            }
        }
    }
}

impl<R: Read> Iterator for Receiver<R> {
    type Item = Result<Vec<u8>, TransportError>;

    fn next(&mut self) -> Option<Self::Item> {
        self.recv().transpose()
    }
}
