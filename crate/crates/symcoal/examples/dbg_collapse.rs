use symcoal::forward::*;
use symcoal::measures::DiscreteLaw;
use symcoal::metric::{d_lambda_upper_with, SrtMap};
use symcoal::rng::replicate_rng;

fn run_config(k: u64, l: u64, eta: f64, horizon: f64, seeds: usize) {
    let d = Demography::LongDrastic {
        alpha: 1.0,
        eta,
        f0: DiscreteLaw::point_mass(k),
        l: DiscreteLaw::point_mass(l),
    };
    print!("k={k} l={l} eta={eta} T={horizon}: ");
    for (ni, &n) in [100u64, 1_000, 10_000].iter().enumerate() {
        let mut ds = Vec::new();
        let mut us = Vec::new();
        for s in 0..seeds {
            let mut rng = replicate_rng(0xACC + 12, (ni * seeds + s) as u64);
            let gens = (horizon * n as f64) as usize + 600;
            let t = simulate_forward(&d, n, 0.5, gens, &mut rng).unwrap();
            let c = collapse_bottlenecks(&t);
            let raw = rescale_time(&t.frequencies(), n as f64, horizon).unwrap();
            let col = rescale_time(&c.frequencies(), n as f64, horizon).unwrap();
            let mut knots = Vec::new();
            for &(ci, gi) in &c.srt_knots {
                let (tr, tc) = (gi as f64 / n as f64, ci as f64 / n as f64);
                if tr > 0.0 && tr < horizon && tc > 0.0 && tc < horizon {
                    if knots.last().map_or(true, |&(a, b)| tr > a && tc > b) {
                        knots.push((tr, tc));
                    }
                }
            }
            let srt = SrtMap::from_knots(horizon, knots).unwrap();
            ds.push(d_lambda_upper_with(&raw, &col, 20_000, &[srt]).unwrap().value);
            us.push(raw.uniform_distance(&col).unwrap());
        }
        ds.sort_by(|a, b| a.partial_cmp(b).unwrap());
        us.sort_by(|a, b| a.partial_cmp(b).unwrap());
        print!("N={n}: d_med={:.4} u_med={:.3};  ", ds[seeds / 2], us[seeds / 2]);
    }
    println!();
}

fn main() {
    run_config(25, 6, 4.0, 2.0, 30);
    run_config(16, 8, 3.0, 2.0, 30);
    run_config(12, 6, 4.0, 2.0, 30);
}
