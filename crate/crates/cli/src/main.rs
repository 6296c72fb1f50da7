use std::process::ExitCode;

fn main() -> ExitCode {
    let mut stdout = std::io::stdout();
    let mut stderr = std::io::stderr();
    let code = aclscope_cli::run(std::env::args_os(), &mut stdout, &mut stderr);
    ExitCode::from(code as u8)
}
