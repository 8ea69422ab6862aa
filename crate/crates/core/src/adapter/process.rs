//! Running one external command under a wall-clock deadline.

use std::collections::BTreeMap;
use std::io::{self, Read};
use std::os::unix::process::CommandExt;
use std::path::Path;
use std::process::{Command, ExitStatus, Stdio};
use std::thread;
use std::time::{Duration, Instant};

#[derive(Debug)]
pub struct ProcessOutput {
    /// `None` when the process was killed at the deadline.
    pub status: Option<ExitStatus>,
    pub stdout: String,
    pub stderr: String,
    pub elapsed: Duration,
    pub timed_out: bool,
}

fn kill_group(pgid: u32) {
    // SAFETY: kill(2) has no memory-safety preconditions. A negative pid
    // addresses the process group; ESRCH just means nothing is left.
    unsafe {
        libc::kill(-(pgid as libc::pid_t), libc::SIGKILL);
    }
}

fn drain<R: Read + Send + 'static>(src: Option<R>) -> thread::JoinHandle<Vec<u8>> {
    thread::spawn(move || {
        let mut buf = Vec::new();
        if let Some(mut r) = src {
            let _ = r.read_to_end(&mut buf);
        }
        buf
    })
}

/// Spawns `argv` in its own process group and waits at most `deadline`.
///
/// On timeout the whole group receives SIGKILL. The group is also killed
/// after a normal exit so background children never outlive the call.
pub fn run_with_deadline(
    argv: &[String],
    workdir: Option<&Path>,
    env: &BTreeMap<String, String>,
    deadline: Option<Duration>,
) -> io::Result<ProcessOutput> {
    let (prog, args) = argv
        .split_first()
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "empty command"))?;
    let mut cmd = Command::new(prog);
    cmd.args(args)
        .envs(env)
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .process_group(0);
    if let Some(dir) = workdir {
        cmd.current_dir(dir);
    }

    let start = Instant::now();
    let mut child = cmd.spawn()?;
    let pgid = child.id();
    let out_reader = drain(child.stdout.take());
    let err_reader = drain(child.stderr.take());

    let mut timed_out = false;
    let status = loop {
        if let Some(st) = child.try_wait()? {
            break Some(st);
        }
        let waited = start.elapsed();
        if deadline.is_some_and(|d| waited >= d) {
            kill_group(pgid);
            child.wait()?;
            timed_out = true;
            break None;
        }
        let step = Duration::from_millis(if waited < Duration::from_millis(100) { 1 } else { 10 });
        let step = match deadline {
            Some(d) => step.min(d.saturating_sub(waited)).max(Duration::from_micros(100)),
            None => step,
        };
        thread::sleep(step);
    };
    let elapsed = start.elapsed();
    kill_group(pgid);

    let stdout = out_reader.join().unwrap_or_default();
    let stderr = err_reader.join().unwrap_or_default();
    Ok(ProcessOutput {
        status,
        stdout: String::from_utf8_lossy(&stdout).into_owned(),
        stderr: String::from_utf8_lossy(&stderr).into_owned(),
        elapsed,
        timed_out,
    })
}
