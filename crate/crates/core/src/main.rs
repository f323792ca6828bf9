use std::process::ExitCode;

fn main() -> ExitCode {
    let code = mlreact::cli::main_with(std::env::args_os(), &mut std::io::stdout(), &mut std::io::stderr());
    ExitCode::from(code as u8)
}
