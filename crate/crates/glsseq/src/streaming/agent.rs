//! The background transfer agent and its tickets.
//!
//! One agent thread owns the panel-stream reader and the output writer and
//! services requests in submission order. Submission is non-blocking;
//! waiting on a ticket blocks only the caller. Buffers travel inside the
//! requests and come back in the replies, so while a transfer is in flight
//! the orchestrator simply has no reference to that buffer: the "the agent
//! never touches the compute workspace" invariant is ownership, not a flag.
//!
//! A simulated policy delays each completion to no earlier than
//! `submission + latency + bytes / bandwidth`, serving the same bytes as
//! the real files. That makes overlap behavior reproducible on any disk.

use std::path::Path;
use std::sync::mpsc;
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use crate::solvers::SolutionRecord;
use crate::storage::format::record_len;
use crate::storage::{BlockWriter, DatasetHeader, StorageError, XrReader};

use super::StreamError;

/// How transfers behave in time. Bytes always come from the real files.
#[derive(Debug, Clone, Copy)]
pub enum IoPolicy {
    Real,
    Simulated {
        latency: Duration,
        /// Bytes per second; `f64::INFINITY` charges latency only.
        bandwidth: f64,
    },
}

impl IoPolicy {
    /// Simulated policy from milliseconds and bytes/second.
    pub fn simulated(latency_ms: f64, bandwidth: f64) -> Self {
        assert!(
            latency_ms >= 0.0 && bandwidth >= 0.0,
            "simulated parameters must be nonnegative"
        );
        IoPolicy::Simulated {
            latency: Duration::from_secs_f64(latency_ms / 1e3),
            bandwidth: if bandwidth == 0.0 {
                f64::INFINITY
            } else {
                bandwidth
            },
        }
    }

    /// Earliest allowed completion for a transfer of `bytes` submitted at
    /// `issued`.
    fn earliest_completion(&self, issued: Instant, bytes: usize) -> Instant {
        match *self {
            IoPolicy::Real => issued,
            IoPolicy::Simulated { latency, bandwidth } => {
                let transfer = bytes as f64 / bandwidth;
                issued + latency + Duration::from_secs_f64(transfer)
            }
        }
    }
}

struct Reply<T> {
    payload: T,
    result: Result<(), StorageError>,
    busy: Duration,
}

enum Request {
    Read {
        first: usize,
        count: usize,
        buf: Vec<f64>,
        issued: Instant,
        reply: mpsc::Sender<Reply<Vec<f64>>>,
    },
    Write {
        first: usize,
        records: Vec<SolutionRecord>,
        issued: Instant,
        reply: mpsc::Sender<Reply<Vec<SolutionRecord>>>,
    },
    Finalize {
        reply: mpsc::Sender<Result<(), StorageError>>,
    },
}

/// A pending transfer. Dropping an unwaited ticket abandons its buffer but
/// the transfer itself still completes (the agent already owns the work).
pub struct Ticket<T> {
    rx: mpsc::Receiver<Reply<T>>,
    settled: Option<Reply<T>>,
    /// Schedule ordinal of the block this transfer serves.
    pub block: usize,
}

impl<T> Ticket<T> {
    /// Nonblocking: has the transfer reached Done or Failed? Once true,
    /// stays true.
    pub fn is_settled(&mut self) -> bool {
        if self.settled.is_none() {
            if let Ok(reply) = self.rx.try_recv() {
                self.settled = Some(reply);
            }
        }
        self.settled.is_some()
    }

    /// Blocks until the transfer settles; returns the buffer and the time
    /// the agent spent on this transfer.
    pub fn wait(mut self) -> Result<(T, Duration), StreamError> {
        let reply = match self.settled.take() {
            Some(reply) => reply,
            None => self.rx.recv().map_err(|_| {
                StreamError::Agent("transfer agent exited before completing a ticket".into())
            })?,
        };
        match reply.result {
            Ok(()) => Ok((reply.payload, reply.busy)),
            Err(source) => Err(StreamError::IoFailed {
                block: self.block,
                source,
            }),
        }
    }
}

/// Handle to the agent thread. At most one read and one write are kept in
/// flight by the callers; the agent itself services strictly in order.
pub struct TransferAgent {
    tx: Option<mpsc::Sender<Request>>,
    handle: Option<JoinHandle<()>>,
    policy: IoPolicy,
    panel_floats: usize,
    record_bytes: usize,
}

impl TransferAgent {
    /// Opens the panel stream and creates the output file, then starts the
    /// agent. `header` fixes the output geometry.
    pub fn spawn(
        xr_path: &Path,
        b_path: &Path,
        header: &DatasetHeader,
        policy: IoPolicy,
    ) -> Result<Self, StreamError> {
        let reader = XrReader::open(xr_path)?;
        if reader.header().dims() != header.dims() {
            return Err(StreamError::Storage(StorageError::DimMismatch(format!(
                "panel stream stores {:?}, run expects {:?}",
                reader.header().dims(),
                header.dims()
            ))));
        }
        let writer = BlockWriter::create(b_path, header)?;
        let panel_floats = (header.n * header.r) as usize;
        let record_bytes = record_len(header.p());
        let (tx, rx) = mpsc::channel::<Request>();
        let handle = std::thread::Builder::new()
            .name("transfer-agent".into())
            .spawn(move || agent_loop(rx, reader, writer, policy))
            .map_err(|e| StreamError::Agent(format!("cannot start transfer agent: {e}")))?;
        Ok(Self {
            tx: Some(tx),
            handle: Some(handle),
            policy,
            panel_floats,
            record_bytes,
        })
    }

    fn sender(&self) -> &mpsc::Sender<Request> {
        self.tx.as_ref().expect("agent channel open until drop")
    }

    /// Queues a read of panels `[first, first+count)` into `buf`. Returns
    /// immediately.
    pub fn submit_read(
        &self,
        block: usize,
        first: usize,
        count: usize,
        buf: Vec<f64>,
    ) -> Result<Ticket<Vec<f64>>, StreamError> {
        let (reply, rx) = mpsc::channel();
        self.sender()
            .send(Request::Read {
                first,
                count,
                buf,
                issued: Instant::now(),
                reply,
            })
            .map_err(|_| StreamError::Agent("transfer agent is gone".into()))?;
        Ok(Ticket {
            rx,
            settled: None,
            block,
        })
    }

    /// Queues a positional write of `records` at `first`. Returns
    /// immediately.
    pub fn submit_write(
        &self,
        block: usize,
        first: usize,
        records: Vec<SolutionRecord>,
    ) -> Result<Ticket<Vec<SolutionRecord>>, StreamError> {
        let (reply, rx) = mpsc::channel();
        self.sender()
            .send(Request::Write {
                first,
                records,
                issued: Instant::now(),
                reply,
            })
            .map_err(|_| StreamError::Agent("transfer agent is gone".into()))?;
        Ok(Ticket {
            rx,
            settled: None,
            block,
        })
    }

    /// Marks the output file complete. Call only after every write ticket
    /// has settled.
    pub fn finalize_outputs(&self) -> Result<(), StreamError> {
        let (reply, rx) = mpsc::channel();
        self.sender()
            .send(Request::Finalize { reply })
            .map_err(|_| StreamError::Agent("transfer agent is gone".into()))?;
        rx.recv()
            .map_err(|_| StreamError::Agent("transfer agent exited during finalize".into()))?
            .map_err(StreamError::Storage)
    }

    pub fn policy(&self) -> IoPolicy {
        self.policy
    }

    /// Bytes a read of `count` panels moves; used for reporting.
    pub fn read_bytes(&self, count: usize) -> usize {
        count * self.panel_floats * 8
    }

    /// Bytes a write of `count` records moves.
    pub fn write_bytes(&self, count: usize) -> usize {
        count * self.record_bytes
    }
}

impl Drop for TransferAgent {
    fn drop(&mut self) {
        // Closing the channel is the shutdown signal.
        drop(self.tx.take());
        if let Some(handle) = self.handle.take() {
            let _ = handle.join();
        }
    }
}

fn sleep_until(target: Instant) {
    let now = Instant::now();
    if target > now {
        std::thread::sleep(target - now);
    }
}

fn agent_loop(
    rx: mpsc::Receiver<Request>,
    mut reader: XrReader,
    writer: BlockWriter,
    policy: IoPolicy,
) {
    let p = reader.header().p();
    let mut writer = Some(writer);
    while let Ok(request) = rx.recv() {
        match request {
            Request::Read {
                first,
                count,
                mut buf,
                issued,
                reply,
                ..
            } => {
                let start = Instant::now();
                let result = reader.read_block_into(first, count, &mut buf);
                if result.is_ok() {
                    sleep_until(policy.earliest_completion(issued, buf.len() * 8));
                }
                let _ = reply.send(Reply {
                    payload: buf,
                    result,
                    busy: start.elapsed(),
                });
            }
            Request::Write {
                first,
                records,
                issued,
                reply,
                ..
            } => {
                let start = Instant::now();
                let result = match writer.as_mut() {
                    Some(w) => w.write_block(first, &records),
                    None => Err(StorageError::InvalidArgument("write after finalize".into())),
                };
                if result.is_ok() {
                    let bytes = records.len() * record_len(p);
                    sleep_until(policy.earliest_completion(issued, bytes));
                }
                let _ = reply.send(Reply {
                    payload: records,
                    result,
                    busy: start.elapsed(),
                });
            }
            Request::Finalize { reply } => {
                let result = match writer.take() {
                    Some(w) => w.finalize(),
                    None => Err(StorageError::InvalidArgument(
                        "finalize called twice".into(),
                    )),
                };
                let _ = reply.send(result);
            }
        }
    }
}
