use std::io::IsTerminal;
use std::process::ExitCode;

use hmsge::cli::{main_with, Output};

fn main() -> ExitCode {
    let stdout = std::io::stdout();
    let aligned = stdout.is_terminal();
    let mut lock = stdout.lock();
    let mut out = Output {
        out: &mut lock,
        aligned,
    };
    let code = main_with(std::env::args_os(), &mut out, &mut std::io::stderr());
    ExitCode::from(code as u8)
}
