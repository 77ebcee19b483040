fn main() {
    std::process::exit(voxelenc::pipeline::run(std::env::args_os()));
}
