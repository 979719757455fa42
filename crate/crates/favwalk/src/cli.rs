//! Command-line interface.

/// Exit code for I/O failures.
pub const EXIT_IO: i32 = 1;
/// Exit code for usage errors (unknown flags or subcommands).
pub const EXIT_USAGE: i32 = 2;

/// Run the tool on the given arguments, returning the process exit code.
pub fn run<I, S>(_argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<String>,
{
    0
}
