//! Parameter sweep over a directory of ground-truth images.
//!
//! `cargo run --release --example sweep -- <dir> [--key=value ...]`

use std::time::Instant;

use arnl_interp::bicubic::bicubic_upscale;
use arnl_interp::cli::{list_images, parse_overrides};
use arnl_interp::io::read_image;
use arnl_interp::metrics::psnr;
use arnl_interp::sampling::downsample;
use arnl_interp::solver::SolverState;

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let dir = std::path::PathBuf::from(&args[0]);
    let run = parse_overrides(&args[1..]).expect("overrides");
    let cfg = run.solver;
    let (mut sum_b, mut sum_p, mut n) = (0.0, 0.0, 0.0);
    for path in list_images(&dir).unwrap() {
        let truth = read_image(&path).unwrap();
        let lr = downsample(&truth, &cfg.sampling).unwrap();
        let bic = bicubic_upscale(&lr, &cfg.sampling).clamp(0.0, 255.0);
        let pb = psnr(&truth, &bic, 255.0).unwrap();
        let start = Instant::now();
        let mut state = SolverState::new(&lr, &cfg).unwrap();
        let mut per_iter = Vec::new();
        while state.t < cfg.max_iters {
            state.step(&cfg).unwrap();
            per_iter.push(psnr(&truth, &state.x.clamp(0.0, 255.0), 255.0).unwrap());
        }
        let pp = *per_iter.last().unwrap();
        let trace: Vec<String> = per_iter.iter().map(|p| format!("{:.2}", p - pb)).collect();
        println!(
            "{:<10} bicubic {:.3} proposed {:.3} gain {:+.3} ({:.1}s) per-iter [{}] res {:.2e}",
            path.file_stem().unwrap().to_string_lossy(),
            pb,
            pp,
            pp - pb,
            start.elapsed().as_secs_f64(),
            trace.join(" "),
            state.history.last().unwrap().data_residual
        );
        sum_b += pb;
        sum_p += pp;
        n += 1.0;
    }
    println!("MEAN bicubic {:.3} proposed {:.3} gain {:+.3}", sum_b / n, sum_p / n, (sum_p - sum_b) / n);
}
