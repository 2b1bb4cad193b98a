fn main() {
    // Restore the default SIGPIPE disposition so `svv ... | head` dies
    // quietly like any filter; the Rust runtime's ignore turns a closed
    // pipe into a println! panic.
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    std::process::exit(svv::cli::run_cli(std::env::args()));
}
