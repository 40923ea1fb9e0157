fn main() -> std::process::ExitCode {
    sticker_defense::cli::main()
}
