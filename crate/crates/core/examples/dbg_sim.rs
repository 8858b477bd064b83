use suredeconv::psf::{GaussianParams, PsfModel};
use suredeconv::spectral::{forward_dft, inverse_dft, ImageGrid};
use suredeconv::texture;
use suredeconv::tiler::{deconvolve_tiled, estimate_tiled, psnr, TileConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn run_case(truth: (f64, f64, f64), snr: f64, size: usize, patch: usize, use_mad: bool, label: &str) {
    let t0 = std::time::Instant::now();
    let scene: ImageGrid<f64> = texture::dead_leaves(size, size, 21).unwrap();
    let model = PsfModel::Gaussian(GaussianParams { omega_x: truth.0, omega_y: truth.1, theta: truth.2 });
    let h = model.spectrum(size, size).unwrap();
    let blurred = inverse_dft(&h.hadamard(&forward_dft(&scene)).unwrap()).unwrap();
    let sigma = blurred.mean() / snr;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut normal = move || {
        let u1: f64 = rng.random::<f64>().max(1e-300);
        let u2: f64 = rng.random();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    };
    let noisy = ImageGrid::from_fn(size, size, |y, x| blurred.get(y, x) + sigma * normal()).unwrap();
    let cfg = TileConfig {
        patch_rows: patch,
        patch_cols: patch,
        overlap: 0.25,
        sigma: if use_mad { None } else { Some(sigma) },
        ..TileConfig::default()
    };
    match estimate_tiled(&noisy, &cfg) {
        Ok(stats) => {
            let models = stats.resolved_models(&cfg.init).unwrap();
            let stitched = deconvolve_tiled(&noisy, &stats.layout, &models, 1.0).unwrap();
            let p0 = psnr(&noisy, &scene, 1.0).unwrap();
            let p1 = psnr(&stitched, &scene, 1.0).unwrap();
            println!(
                "{label}: conv {}/{} mean [{:.2},{:.2},{:.2}] std [{:.2},{:.2},{:.2}] psnr {:.2}->{:.2}  ({:.0}s)",
                stats.converged_count, stats.records.len(),
                stats.mean[0], stats.mean[1], stats.mean[2],
                stats.std[0], stats.std[1], stats.std[2], p0, p1, t0.elapsed().as_secs_f64()
            );
        }
        Err(e) => println!("{label}: ERROR {e}"),
    }
}

fn main() {
    run_case((2.2, 1.2, 0.3), 10.0, 512, 256, false, "iso  snr10 512");
    run_case((2.2, 1.2, 0.3), 10.0, 512, 256, true,  "iso  snr10 512 mad");
    run_case((0.8, 3.2, 0.0), 10.0, 512, 256, false, "anis snr10 512");
    run_case((0.8, 3.2, 0.0), 14.0, 512, 256, true,  "anis snr14 512 mad");
}
