//! Supervised one-shot processes.
//!
//! Each run gets a fresh working directory, an empty environment, its own
//! process group and kernel limits (address space, CPU, no core dumps).
//! With networking disallowed, a seccomp filter kills the process on any
//! attempt to open an IPv4/IPv6 socket. A supervisor thread polls the child
//! and kills the whole group when the CPU or wall budget is exceeded.

use std::io::{self, Read, Write};
use std::os::unix::process::{CommandExt, ExitStatusExt};
use std::path::Path;
use std::process::{Child, Command, ExitStatus, Stdio};
use std::sync::OnceLock;
use std::thread;
use std::time::{Duration, Instant};

use serde::Serialize;

use crate::model::ResourceBudget;

const POLL: Duration = Duration::from_millis(10);
const STDOUT_CAP: u64 = 16 * 1024 * 1024;
const STDERR_CAP: u64 = 64 * 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Limit {
    Cpu,
    Wall,
    Memory,
}

impl std::fmt::Display for Limit {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Limit::Cpu => "cpu",
            Limit::Wall => "wall",
            Limit::Memory => "memory",
        })
    }
}

/// How a supervised run ended.
#[derive(Debug)]
pub enum RunOutcome {
    Exited { stdout: Vec<u8>, stderr: Vec<u8> },
    Failed { status: ExitStatus, stderr: Vec<u8> },
    Exceeded(Limit),
    /// The process was killed by the syscall filter.
    Violation(&'static str),
}

/// What this host can enforce.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct SandboxCapabilities {
    pub cpu_limit: bool,
    pub wall_limit: bool,
    pub memory_limit: bool,
    pub network_filter: bool,
    pub process_groups: bool,
}

/// Probed once per process.
pub fn capabilities() -> SandboxCapabilities {
    static CAPS: OnceLock<SandboxCapabilities> = OnceLock::new();
    *CAPS.get_or_init(|| SandboxCapabilities {
        cpu_limit: cfg!(target_os = "linux"),
        wall_limit: true,
        memory_limit: cfg!(target_os = "linux"),
        network_filter: probe_network_filter(),
        process_groups: true,
    })
}

fn probe_network_filter() -> bool {
    let Some(filter) = seccomp::network_filter() else { return false };
    let mut cmd = Command::new("/bin/sh");
    cmd.args(["-c", "exit 0"]).stdin(Stdio::null()).stdout(Stdio::null()).stderr(Stdio::null());
    unsafe {
        cmd.pre_exec(move || seccomp::install(&filter));
    }
    cmd.status().is_ok_and(|s| s.success())
}

fn set_limit(resource: libc::__rlimit_resource_t, soft: u64, hard: u64) -> io::Result<()> {
    let lim = libc::rlimit { rlim_cur: soft as libc::rlim_t, rlim_max: hard as libc::rlim_t };
    if unsafe { libc::setrlimit(resource, &lim) } != 0 {
        return Err(io::Error::last_os_error());
    }
    Ok(())
}

fn kill_group(pid: u32) {
    unsafe {
        libc::kill(-(pid as libc::pid_t), libc::SIGKILL);
    }
}

fn clock_ticks() -> f64 {
    static TICKS: OnceLock<f64> = OnceLock::new();
    *TICKS.get_or_init(|| match unsafe { libc::sysconf(libc::_SC_CLK_TCK) } {
        t if t > 0 => t as f64,
        _ => 100.0,
    })
}

/// User plus system CPU seconds consumed by `pid`.
fn cpu_seconds(pid: u32) -> Option<f64> {
    let stat = std::fs::read_to_string(format!("/proc/{pid}/stat")).ok()?;
    // Fields after the parenthesised command name; utime and stime are the
    // 12th and 13th of those.
    let rest = &stat[stat.rfind(')')? + 2..];
    let mut fields = rest.split_ascii_whitespace().skip(11);
    let utime: u64 = fields.next()?.parse().ok()?;
    let stime: u64 = fields.next()?.parse().ok()?;
    Some((utime + stime) as f64 / clock_ticks())
}

fn spawn_retrying(cmd: &mut Command) -> io::Result<Child> {
    let mut delay = Duration::from_millis(2);
    for _ in 0..10 {
        match cmd.spawn() {
            // Another thread forking while we wrote the binary can briefly
            // hold its descriptor open.
            Err(e) if e.raw_os_error() == Some(libc::ETXTBSY) => {
                thread::sleep(delay);
                delay *= 2;
            }
            other => return other,
        }
    }
    cmd.spawn()
}

fn read_capped<R: Read + Send + 'static>(stream: Option<R>, cap: u64) -> thread::JoinHandle<Vec<u8>> {
    thread::spawn(move || {
        let mut buf = Vec::new();
        if let Some(stream) = stream {
            let mut limited = stream.take(cap);
            let _ = limited.read_to_end(&mut buf);
            // Drain the rest so the child never blocks on a full pipe.
            let _ = io::copy(&mut limited.into_inner(), &mut io::sink());
        }
        buf
    })
}

/// Run `program` once under `budget`, feeding `input` on stdin.
pub fn run_supervised(program: &Path, input: &[u8], budget: &ResourceBudget) -> io::Result<RunOutcome> {
    let workdir = tempfile::Builder::new().prefix("sf-run-").tempdir()?;
    let filter = if budget.network_allowed { None } else { seccomp::network_filter() };
    if !budget.network_allowed && filter.is_none() {
        tracing::warn!("network filter unavailable; relying on an empty environment only");
    }
    let cpu_backstop = budget.cpu_time.ceil() as u64 + 1;
    let memory = budget.memory;

    let mut cmd = Command::new(program);
    cmd.env_clear()
        .env("PATH", "/usr/bin:/bin")
        .current_dir(workdir.path())
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .process_group(0);
    unsafe {
        cmd.pre_exec(move || {
            set_limit(libc::RLIMIT_CORE, 0, 0)?;
            set_limit(libc::RLIMIT_CPU, cpu_backstop, cpu_backstop + 1)?;
            set_limit(libc::RLIMIT_AS, memory, memory)?;
            if let Some(filter) = &filter {
                seccomp::install(filter)?;
            }
            Ok(())
        });
    }

    let started = Instant::now();
    let mut child = spawn_retrying(&mut cmd)?;
    let pid = child.id();

    let mut stdin = child.stdin.take();
    let payload = input.to_vec();
    let writer = thread::spawn(move || {
        if let Some(stdin) = stdin.as_mut() {
            let _ = stdin.write_all(&payload).and_then(|_| stdin.write_all(b"\n"));
        }
    });
    let stdout = read_capped(child.stdout.take(), STDOUT_CAP);
    let stderr = read_capped(child.stderr.take(), STDERR_CAP);

    let wall = Duration::from_secs_f64(budget.wall_time);
    let status = loop {
        if let Some(status) = child.try_wait()? {
            break Ok(status);
        }
        if started.elapsed() > wall {
            break Err(Limit::Wall);
        }
        if cpu_seconds(pid).is_some_and(|cpu| cpu > budget.cpu_time) {
            break Err(Limit::Cpu);
        }
        thread::sleep(POLL);
    };
    // Reap the group either way so stray descendants cannot keep pipes open.
    kill_group(pid);
    if status.is_err() {
        let _ = child.wait();
    }
    let _ = writer.join();
    let stdout = stdout.join().unwrap_or_default();
    let stderr = stderr.join().unwrap_or_default();

    let status = match status {
        Ok(status) => status,
        Err(limit) => return Ok(RunOutcome::Exceeded(limit)),
    };
    if status.success() {
        return Ok(RunOutcome::Exited { stdout, stderr });
    }
    Ok(match status.signal() {
        Some(libc::SIGSYS) => RunOutcome::Violation("network"),
        Some(libc::SIGXCPU) => RunOutcome::Exceeded(Limit::Cpu),
        _ if String::from_utf8_lossy(&stderr).contains("memory allocation") => RunOutcome::Exceeded(Limit::Memory),
        _ => RunOutcome::Failed { status, stderr },
    })
}

#[cfg(all(target_os = "linux", any(target_arch = "x86_64", target_arch = "aarch64")))]
mod seccomp {
    use std::io;

    use libc::{sock_filter, sock_fprog};

    const LD_W_ABS: u16 = 0x20;
    const JEQ_K: u16 = 0x15;
    const JGE_K: u16 = 0x35;
    const RET_K: u16 = 0x06;
    const KILL: u32 = 0x8000_0000;
    const ALLOW: u32 = 0x7fff_0000;
    const OFF_NR: u32 = 0;
    const OFF_ARCH: u32 = 4;
    const OFF_ARG0: u32 = 16;

    #[cfg(target_arch = "x86_64")]
    const ARCH: u32 = 0xC000_003E;
    #[cfg(target_arch = "aarch64")]
    const ARCH: u32 = 0xC000_00B7;

    fn stmt(code: u16, k: u32) -> sock_filter {
        sock_filter { code, jt: 0, jf: 0, k }
    }

    fn jump(code: u16, k: u32, jt: u8, jf: u8) -> sock_filter {
        sock_filter { code, jt, jf, k }
    }

    /// Kill on foreign architectures, io_uring and inet sockets.
    pub fn network_filter() -> Option<Vec<sock_filter>> {
        let mut prog = vec![
            stmt(LD_W_ABS, OFF_ARCH),
            jump(JEQ_K, ARCH, 1, 0),
            stmt(RET_K, KILL),
            stmt(LD_W_ABS, OFF_NR),
        ];
        if cfg!(target_arch = "x86_64") {
            // x32 ABI syscalls have bit 30 set.
            prog.push(jump(JGE_K, 0x4000_0000, 0, 1));
            prog.push(stmt(RET_K, KILL));
        }
        prog.extend([
            jump(JEQ_K, libc::SYS_io_uring_setup as u32, 0, 1),
            stmt(RET_K, KILL),
            jump(JEQ_K, libc::SYS_socket as u32, 1, 0),
            stmt(RET_K, ALLOW),
            stmt(LD_W_ABS, OFF_ARG0),
            jump(JEQ_K, libc::AF_INET as u32, 2, 0),
            jump(JEQ_K, libc::AF_INET6 as u32, 1, 0),
            stmt(RET_K, ALLOW),
            stmt(RET_K, KILL),
        ]);
        Some(prog)
    }

    /// Runs between fork and exec: syscalls only, no allocation.
    pub fn install(filter: &[sock_filter]) -> io::Result<()> {
        let prog = sock_fprog { len: filter.len() as u16, filter: filter.as_ptr() as *mut sock_filter };
        unsafe {
            if libc::prctl(libc::PR_SET_NO_NEW_PRIVS, 1, 0, 0, 0) != 0 {
                return Err(io::Error::last_os_error());
            }
            if libc::prctl(libc::PR_SET_SECCOMP, libc::SECCOMP_MODE_FILTER, &prog as *const sock_fprog) != 0 {
                return Err(io::Error::last_os_error());
            }
        }
        Ok(())
    }
}

#[cfg(not(all(target_os = "linux", any(target_arch = "x86_64", target_arch = "aarch64"))))]
mod seccomp {
    pub fn network_filter() -> Option<Vec<()>> {
        None
    }

    pub fn install(_: &[()]) -> std::io::Result<()> {
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sh(script: &str) -> std::path::PathBuf {
        let dir = tempfile::tempdir().unwrap().keep();
        let path = dir.join("run.sh");
        std::fs::write(&path, format!("#!/bin/sh\n{script}\n")).unwrap();
        std::fs::set_permissions(&path, std::os::unix::fs::PermissionsExt::from_mode(0o755)).unwrap();
        path
    }

    #[test]
    fn echoes_stdin() {
        let out = run_supervised(&sh("cat"), br#"{"a":1}"#, &ResourceBudget::default()).unwrap();
        match out {
            RunOutcome::Exited { stdout, .. } => assert_eq!(stdout, b"{\"a\":1}\n"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn environment_is_cleared() {
        std::env::set_var("SF_SECRET_FOR_TEST", "x");
        let out = run_supervised(&sh("echo \"[$SF_SECRET_FOR_TEST]\""), b"", &ResourceBudget::default()).unwrap();
        match out {
            RunOutcome::Exited { stdout, .. } => assert_eq!(stdout, b"[]\n"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn wall_budget_kills_sleepers() {
        let budget = ResourceBudget { wall_time: 0.3, ..Default::default() };
        let started = Instant::now();
        let out = run_supervised(&sh("sleep 5"), b"", &budget).unwrap();
        assert!(matches!(out, RunOutcome::Exceeded(Limit::Wall)), "{out:?}");
        assert!(started.elapsed() < Duration::from_millis(800));
    }

    #[test]
    fn inet_sockets_are_fatal_without_network() {
        if !capabilities().network_filter || !Path::new("/usr/bin/python3").exists() {
            return;
        }
        let script = sh("exec /usr/bin/python3 -c 'import socket; socket.socket(socket.AF_INET)'");
        let out = run_supervised(&script, b"", &ResourceBudget::default()).unwrap();
        assert!(matches!(out, RunOutcome::Violation("network")), "{out:?}");
        let unix = sh("exec /usr/bin/python3 -c 'import socket; socket.socket(socket.AF_UNIX)'");
        let out = run_supervised(&unix, b"", &ResourceBudget::default()).unwrap();
        assert!(matches!(out, RunOutcome::Exited { .. }), "{out:?}");
    }

    #[test]
    fn nonzero_exit_is_a_failure() {
        let out = run_supervised(&sh("exit 3"), b"", &ResourceBudget::default()).unwrap();
        match out {
            RunOutcome::Failed { status, .. } => assert_eq!(status.code(), Some(3)),
            other => panic!("{other:?}"),
        }
    }
}
