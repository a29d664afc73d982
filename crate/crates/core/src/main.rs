use std::io;

fn main() {
    let out_dir = std::env::var_os("OUT_DIR").map(Into::into);
    let code = fedmoe::cli::run(std::env::args_os(), out_dir, &mut io::stdout(), &mut io::stderr());
    std::process::exit(code);
}
