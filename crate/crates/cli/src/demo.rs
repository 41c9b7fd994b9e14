//! Live sender/receiver pair over TCP.

use std::io::{self, BufRead, Write};
use std::net::TcpListener;

use clap::Subcommand;

use linkpad::transport::{self, Receiver, Sender};

use crate::{CliError, CliResult, ShaperArgs};

#[derive(Debug, Subcommand)]
pub enum DemoCommand {
    /// Read lines from standard input and send each as one shaped message.
    Send {
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long)]
        port: u16,
        #[command(flatten)]
        shaper: ShaperArgs,
    },
    /// Accept one sender and print each message on its own line.
    Recv {
        /// Address to listen on; port 0 picks a free port.
        #[arg(long, default_value = "127.0.0.1:7878")]
        listen: String,
    },
}

pub fn run(cmd: &DemoCommand) -> CliResult<()> {
    match cmd {
        DemoCommand::Send { host, port, shaper } => send(host, *port, shaper),
        DemoCommand::Recv { listen } => recv(listen),
    }
}

fn send(host: &str, port: u16, shaper: &ShaperArgs) -> CliResult<()> {
    // A live schedule without an explicit seed should not be predictable.
    let config = shaper.resolve(transport::random_seed)?;
    let data_err = |e: transport::TransportError| CliError::Data(e.to_string());
    let sender = Sender::connect(host, port, config).map_err(data_err)?;
    sender.start().map_err(data_err)?;
    for line in io::stdin().lock().lines() {
        let line = line.map_err(|e| CliError::Data(format!("stdin: {e}")))?;
        sender.send(line).map_err(data_err)?;
    }
    sender.close().map_err(data_err)
}

fn recv(listen: &str) -> CliResult<()> {
    let listener =
        TcpListener::bind(listen).map_err(|e| CliError::Data(format!("bind {listen}: {e}")))?;
    let addr = listener
        .local_addr()
        .map_err(|e| CliError::Data(e.to_string()))?;
    eprintln!("listening on {addr}");
    let mut receiver =
        Receiver::accept(&listener).map_err(|e| CliError::Data(format!("accept: {e}")))?;
    let stdout = io::stdout();
    while let Some(msg) = receiver.recv().map_err(|e| CliError::Data(e.to_string()))? {
        let mut out = stdout.lock();
        out.write_all(&msg)
            .and_then(|()| out.write_all(b"\n"))
            .and_then(|()| out.flush())
            .map_err(|e| CliError::Data(format!("stdout: {e}")))?;
    }
    Ok(())
}
