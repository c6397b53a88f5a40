use weylcalc::beals::*;
use weylcalc::quantize::{weyl_translate, select_submatrix};
use weylcalc::rep::GaussianRep;
use weylcalc::phase::PhaseVector;
use std::sync::Arc;
use std::time::Instant;

fn main() {
    let h = 0.5;
    for (level, tr, tro) in [(40usize, 7.5, 9.0)] {
        let rep = Arc::new(GaussianRep::new(1, level, h).unwrap());
        let x0 = PhaseVector::from_slice(&[0.4, -0.25]);
        let v = weyl_translate(&x0, &rep, 1e-10).unwrap();
        let cfg = ReconstructionConfig { t_radius: tr, t_radius_outer: tro, ..Default::default() };
        let t0 = Instant::now();
        let rec = reconstruct_symbol(&v, &rep, &cfg).unwrap();
        let requant = rec.quantize(&rep).unwrap();
        for k in [6usize, 8, 12] {
            let set = v.safe_set(level - k);
            let rq = (select_submatrix(requant.matrix(), &set) - select_submatrix(v.matrix(), &set)).norm();
            println!("transl N={level} t={tr} deg<={k}: requant {:.3e} t={:.0?}", rq, t0.elapsed());
        }
        println!("tail {:.3e}", rec.tail_change);
    }
}
