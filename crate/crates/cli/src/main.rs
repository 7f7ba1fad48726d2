fn main() {
    std::process::exit(relaynet::run(std::env::args_os()));
}
