use std::process::ExitCode;

fn main() -> ExitCode {
    match readlab::run(std::env::args_os()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("readlab: {failure}");
            ExitCode::from(failure.code)
        }
    }
}
