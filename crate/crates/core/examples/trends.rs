//! Scratch verification of the qualitative behavior at the calibrated
//! coupling: channel-count scaling, power optima, temperature response,
//! cell length, purity, and the four- vs five-level contrast.

use sqzarr::model::{self, ModelConfig};
use sqzarr::physics::CellConfig;

const MW: f64 = 1.0e-3;
const F: f64 = 0.215;

fn cfg_at(n: usize, power: f64, temp_c: f64, length: f64) -> ModelConfig {
    let mut cell = CellConfig::default_cell();
    cell.temperature = temp_c + 273.15;
    cell.length = length;
    let mut cfg = ModelConfig::uniform(n, power, cell);
    cfg.dipole_factor = F;
    cfg.doppler_points = 16;
    cfg.n_slices = 4;
    cfg
}

fn smin(cfg: &ModelConfig, omega: f64) -> (f64, f64, f64) {
    let m = model::prepare(cfg).unwrap();
    let pt = m.spectrum_point(omega).unwrap();
    (pt.s_min_db, pt.s_max_db, pt.purity_db)
}

fn main() {
    let w = 2.0 * std::f64::consts::PI * 160.0e3;

    println!("== power scan, S_min dB at 160 kHz, 63.7 C, 7.5 cm ==");
    let powers = [0.25, 0.5, 1.0, 1.5, 2.0, 3.0, 4.0, 6.0, 8.0];
    for n in [1usize, 8, 30] {
        print!("N = {n:>2}: ");
        let mut best = (f64::INFINITY, 0.0);
        for &p in &powers {
            let (s, _, _) = smin(&cfg_at(n, p * MW, 63.7, 7.5e-2), w);
            if s < best.0 {
                best = (s, p);
            }
            print!("{s:+7.2} ");
        }
        println!("  | opt {:+.2} dB @ {} mW", best.0, best.1);
    }

    println!("== temperature/channel response at 2 mW ==");
    for t in [55.0, 63.7] {
        print!("T = {t:>5}: ");
        for n in [1usize, 5, 8, 15, 30] {
            let (s, _, _) = smin(&cfg_at(n, 2.0 * MW, t, 7.5e-2), w);
            print!("{s:+7.2} ");
        }
        println!();
    }

    println!("== cell length: 7.5 cm optimum vs 12 cm at 3 mW ==");
    let mut best75 = f64::INFINITY;
    for &p in &powers {
        let (s, _, _) = smin(&cfg_at(30, p * MW, 63.7, 7.5e-2), w);
        best75 = best75.min(s);
    }
    let (s12, _, _) = smin(&cfg_at(30, 3.0 * MW, 63.7, 12.0e-2), w);
    println!("best(7.5 cm) = {best75:+.2} dB, 12 cm @ 3 mW = {s12:+.2} dB (want <= {:.2})", best75 - 0.5);

    println!("== purity dB at 1 mW vs N ==");
    for n in [1usize, 5, 8, 15, 30] {
        let (_, _, pur) = smin(&cfg_at(n, MW, 63.7, 7.5e-2), w);
        print!("N={n}: {pur:.3}  ");
    }
    println!();

    println!("== anti-squeezing vs power, four- vs five-level, N = 30 ==");
    for five in [false, true] {
        print!("five_level={five:<5}: ");
        for &p in &[1.0, 2.0, 4.0, 6.0, 8.0] {
            let mut cfg = cfg_at(30, p * MW, 63.7, 7.5e-2);
            cfg.five_level = five;
            let (_, smax, _) = smin(&cfg, w);
            print!("{smax:+7.2} ");
        }
        println!();
    }
}
