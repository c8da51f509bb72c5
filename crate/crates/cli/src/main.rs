fn main() {
    std::process::exit(ilora_cli::main_with_args(std::env::args_os()));
}
