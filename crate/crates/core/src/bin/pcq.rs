fn main() {
    pin_blas_kernel();
    std::process::exit(pcq::cli::main_with_args(std::env::args_os()));
}

/// OpenBLAS chooses its kernels when the library is loaded, before `main`
/// runs, so the kernel pinned for cargo runs in `.cargo/config.toml` is
/// applied here by re-executing once with the variable set. Without this
/// the binary and the test suite would produce different (if equally
/// valid) f32 roundings, and some AVX-512 parts get a faulty f64 kernel.
#[cfg(all(unix, target_arch = "x86_64", feature = "openblas"))]
fn pin_blas_kernel() {
    use std::os::unix::process::CommandExt;

    const VAR: &str = "OPENBLAS_CORETYPE";
    if std::env::var_os(VAR).is_some() {
        return;
    }
    let mut args = std::env::args_os();
    let arg0 = args.next().unwrap_or_else(|| "pcq".into());
    if let Ok(exe) = std::env::current_exe() {
        let err = std::process::Command::new(exe).arg0(arg0).args(args).env(VAR, "Haswell").exec();
        eprintln!("warning: running without a pinned BLAS kernel ({err})");
    }
}

#[cfg(not(all(unix, target_arch = "x86_64", feature = "openblas")))]
fn pin_blas_kernel() {}
