use kickwave_core::action::ActionParams;
use kickwave_core::busemann::{align_at_mid, BusemannCtx, BusemannParams};
use kickwave_core::environment::{Environment, EnvironmentConfig};
use kickwave_core::grid::GridSpec;
use kickwave_core::hopf_lax::evolve_one;

fn main() {
    let h = 1.0f64 / 64.0;
    let window = (-2.0f64, 2.0f64);
    let pad = 6.0f64;
    let lo = ((window.0 - pad) / h).floor() * h;
    let count = ((window.1 + pad - lo) / h).ceil() as usize + 1;
    let ugrid = GridSpec::new(lo, h, count).unwrap();
    for refine in [true, false] {
        for seed in [6u64, 7, 14, 18] {
            let env = Environment::new(EnvironmentConfig::default().with_seed(0xf1f + seed)).unwrap();
            let mut params = BusemannParams::new(-256);
            params.one_sided.do_refine = refine;
            let ctx = BusemannCtx::new(&env, 0.0, 8, params).unwrap();
            let (u0, unr0) = ctx.global_potential(0, &ugrid).unwrap();
            let (u1, unr1) = ctx.global_potential(1, &ugrid).unwrap();
            let (ev, _, _) = evolve_one(&env, &u0, ActionParams::default()).unwrap();
            let lo_i = ugrid.nearest_index(window.0);
            let hi_i = ugrid.nearest_index(window.1);
            let a = align_at_mid(&ev.slice(lo_i, hi_i).unwrap());
            let b = align_at_mid(&u1.slice(lo_i, hi_i).unwrap());
            let mut worst = 0.0f64;
            let mut n_bad = 0;
            for i in 0..a.values.len() {
                let g = (a.values[i] - b.values[i]).abs();
                if g > worst { worst = g; }
                if g > 1e-2 { n_bad += 1; }
            }
            println!("refine={refine} seed {seed}: gap {worst:.4}, bad {n_bad}/257, unreliable {unr0}+{unr1}");
        }
    }
}
