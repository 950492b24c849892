#[global_allocator]
static ALLOC: reid::alloc_meter::CountingAlloc = reid::alloc_meter::CountingAlloc;

fn main() {
    std::process::exit(reid::cli::run(std::env::args_os()));
}
