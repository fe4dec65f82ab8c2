//! TCP ingestion server and a small client.
//!
//! Clients write wire-format lines. For every line the server answers with
//! one line:
//!
//! * `ok <seq>`: the event was applied to the graph
//! * `reject <seq> <reason>`: decoded but not applied (unknown camera, bad
//!   class index); the connection stays open
//! * `error <offset> <message>`: undecodable; the server closes this
//!   connection after sending it
//!
//! `seq` counts records on the connection starting at 1. Events are applied
//! before their answer is written, so an answered event is always in the
//! graph. Ingestion runs inline with reading, so a slow graph or a client
//! that does not read its answers stalls that connection's reads instead of
//! growing a queue.

use std::net::SocketAddr;
use std::sync::atomic::Ordering;
use std::sync::Arc;

use roadsight_core::graph::TrafficGraph;
use tokio::io::{AsyncBufReadExt, AsyncReadExt, AsyncWriteExt, BufReader, BufWriter};
use tokio::net::{TcpListener, TcpStream, ToSocketAddrs};
use tokio::sync::watch;
use tokio::task::JoinSet;

use crate::apply::{apply_event, IngestStats, StatsSnapshot, DEFAULT_CONFIDENCE_CUTOFF};
use crate::wire::{decode_event, WireError};

/// Longest accepted record, newline included.
pub const MAX_LINE_BYTES: usize = 1 << 20;

#[derive(Debug, Clone, PartialEq)]
pub struct ServerConfig {
    pub listen: String,
    pub confidence_cutoff: f64,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self {
            listen: "127.0.0.1:7878".into(),
            confidence_cutoff: DEFAULT_CONFIDENCE_CUTOFF,
        }
    }
}

/// A running server. Dropping it without [`IngestServer::shutdown`] leaves
/// the accept loop running until the runtime stops.
pub struct IngestServer {
    local_addr: SocketAddr,
    stats: Arc<IngestStats>,
    shutdown: watch::Sender<bool>,
    accept_loop: tokio::task::JoinHandle<()>,
}

impl IngestServer {
    pub async fn start(config: ServerConfig, graph: Arc<TrafficGraph>) -> std::io::Result<Self> {
        let listener = TcpListener::bind(&config.listen).await?;
        let local_addr = listener.local_addr()?;
        let stats = Arc::new(IngestStats::default());
        let (tx, rx) = watch::channel(false);
        let accept_loop = tokio::spawn(accept_loop(
            listener,
            graph,
            stats.clone(),
            config.confidence_cutoff,
            rx,
        ));
        log::info!("ingest server listening on {local_addr}");
        Ok(Self {
            local_addr,
            stats,
            shutdown: tx,
            accept_loop,
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.local_addr
    }

    pub fn stats(&self) -> StatsSnapshot {
        self.stats.snapshot()
    }

    /// Stops accepting, lets every connection apply the complete lines it
    /// has already buffered, and waits for them to finish.
    pub async fn shutdown(self) -> StatsSnapshot {
        let _ = self.shutdown.send(true);
        if let Err(e) = self.accept_loop.await {
            log::error!("accept loop failed: {e}");
        }
        self.stats.snapshot()
    }
}

async fn accept_loop(
    listener: TcpListener,
    graph: Arc<TrafficGraph>,
    stats: Arc<IngestStats>,
    cutoff: f64,
    mut shutdown: watch::Receiver<bool>,
) {
    let mut conns = JoinSet::new();
    let for_conns = shutdown.clone();
    loop {
        tokio::select! {
            biased;
            _ = shutdown.wait_for(|stop| *stop) => break,
            Some(_) = conns.join_next(), if !conns.is_empty() => {}
            accepted = listener.accept() => match accepted {
                Ok((stream, peer)) => {
                    stats.connections.fetch_add(1, Ordering::Relaxed);
                    let conn = Connection {
                        graph: graph.clone(),
                        stats: stats.clone(),
                        cutoff,
                        seq: 0,
                    };
                    let rx = for_conns.clone();
                    conns.spawn(async move {
                        if let Err(e) = conn.run(stream, rx).await {
                            log::warn!("connection {peer}: {e}");
                        }
                    });
                }
                Err(e) => log::warn!("accept failed: {e}"),
            },
        }
    }
    drop(listener);
    while conns.join_next().await.is_some() {}
}

enum Next {
    Continue,
    Close,
}

struct Connection {
    graph: Arc<TrafficGraph>,
    stats: Arc<IngestStats>,
    cutoff: f64,
    seq: u64,
}

impl Connection {
    async fn run(
        mut self,
        stream: TcpStream,
        mut shutdown: watch::Receiver<bool>,
    ) -> std::io::Result<()> {
        let (rd, wr) = stream.into_split();
        let mut reader = BufReader::new(rd);
        let mut writer = BufWriter::new(wr);
        let mut line = Vec::new();
        loop {
            if reader.buffer().is_empty() {
                writer.flush().await?;
            }
            let budget = (MAX_LINE_BYTES - line.len()) as u64;
            let mut limited = (&mut reader).take(budget);
            let read = tokio::select! {
                biased;
                _ = shutdown.wait_for(|stop| *stop) => None,
                r = limited.read_until(b'\n', &mut line) => Some(r?),
            };
            match read {
                None => {
                    // Drain complete lines already read off the socket.
                    let mut pending = std::mem::take(&mut line);
                    pending.extend_from_slice(reader.buffer());
                    for record in pending.split_inclusive(|&b| b == b'\n') {
                        if !record.ends_with(b"\n") {
                            break;
                        }
                        if let Next::Close = self.handle(record, &mut writer).await? {
                            break;
                        }
                    }
                    break;
                }
                Some(0) => {
                    if !line.is_empty() {
                        self.handle(&line, &mut writer).await?;
                    }
                    break;
                }
                Some(_) if !line.ends_with(b"\n") && line.len() >= MAX_LINE_BYTES => {
                    self.stats.decode_errors.fetch_add(1, Ordering::Relaxed);
                    writer
                        .write_all(format!("error {MAX_LINE_BYTES} record longer than {MAX_LINE_BYTES} bytes\n").as_bytes())
                        .await?;
                    break;
                }
                Some(_) => {
                    if !line.ends_with(b"\n") {
                        // EOF mid-line; the next read returns 0.
                        continue;
                    }
                    let next = self.handle(&line, &mut writer).await?;
                    line.clear();
                    if let Next::Close = next {
                        break;
                    }
                }
            }
        }
        writer.flush().await?;
        writer.into_inner().shutdown().await
    }

    async fn handle<W: AsyncWriteExt + Unpin>(
        &mut self,
        record: &[u8],
        out: &mut W,
    ) -> std::io::Result<Next> {
        if record.iter().all(u8::is_ascii_whitespace) {
            return Ok(Next::Continue);
        }
        self.seq += 1;
        let decoded = std::str::from_utf8(record)
            .map_err(|e| WireError::Malformed {
                offset: e.valid_up_to(),
                message: "invalid utf-8".into(),
            })
            .and_then(decode_event);
        let event = match decoded {
            Ok(e) => e,
            Err(e) => {
                self.stats.decode_errors.fetch_add(1, Ordering::Relaxed);
                let offset = match &e {
                    WireError::Malformed { offset, .. } => *offset,
                    WireError::Version(_) => 0,
                };
                out.write_all(format!("error {offset} {e}\n").as_bytes())
                    .await?;
                return Ok(Next::Close);
            }
        };
        let result = apply_event(&self.graph, &event, self.cutoff);
        self.stats.record(&result);
        let reply = match result {
            Ok(_) => format!("ok {}\n", self.seq),
            Err(r) => format!("reject {} {r}\n", self.seq),
        };
        out.write_all(reply.as_bytes()).await?;
        Ok(Next::Continue)
    }
}

/// What a client saw from the server.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ClientReport {
    pub sent: u64,
    pub ok: u64,
    pub rejected: u64,
    pub errors: Vec<String>,
}

/// Sends `lines` (each newline-terminated) on one connection and collects
/// the answers until the server closes the stream.
pub async fn send_lines<A, I>(addr: A, lines: I) -> std::io::Result<ClientReport>
where
    A: ToSocketAddrs,
    I: IntoIterator<Item = String> + Send + 'static,
    I::IntoIter: Send,
{
    let stream = TcpStream::connect(addr).await?;
    let (rd, wr) = stream.into_split();
    let writer = tokio::spawn(async move {
        let mut wr = BufWriter::new(wr);
        let mut sent = 0u64;
        for line in lines {
            if wr.write_all(line.as_bytes()).await.is_err() {
                break;
            }
            sent += 1;
        }
        let _ = wr.flush().await;
        let _ = wr.into_inner().shutdown().await;
        sent
    });

    let mut report = ClientReport::default();
    let mut answers = BufReader::new(rd).lines();
    loop {
        match answers.next_line().await {
            Ok(Some(answer)) => {
                if answer.starts_with("ok ") {
                    report.ok += 1;
                } else if answer.starts_with("reject ") {
                    report.rejected += 1;
                } else {
                    report.errors.push(answer);
                }
            }
            Ok(None) => break,
            // A reset after the server closed; answers read so far stand.
            Err(e) if e.kind() == std::io::ErrorKind::ConnectionReset => break,
            Err(e) => return Err(e),
        }
    }
    report.sent = writer.await.map_err(std::io::Error::other)?;
    Ok(report)
}
