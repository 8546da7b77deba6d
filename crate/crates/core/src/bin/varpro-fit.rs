use std::io::Write;
use std::process::ExitCode;

fn main() -> ExitCode {
    let inv = varpro_newton::cli::invoke(std::env::args_os());
    if !inv.stdout.is_empty() {
        let _ = std::io::stdout().write_all(inv.stdout.as_bytes());
    }
    if !inv.stderr.is_empty() {
        let _ = std::io::stderr().write_all(inv.stderr.as_bytes());
    }
    ExitCode::from(inv.exit_code as u8)
}
