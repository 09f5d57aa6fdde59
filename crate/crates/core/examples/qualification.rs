//! Qualification inequality sup_t t^q |r_lambda(t)| <= gamma_q lambda^q for
//! each regularizer, and the gate that refuses a too-smooth target.

use invlearn::spectral::{make_regularizer, qualification_sup, Method, DEFAULT_GRID};

fn main() -> invlearn::Result<()> {
    for (method, q) in [(Method::Tikhonov, 1.0), (Method::SpectralCutoff, 2.0), (Method::Landweber, 2.0)] {
        let reg = make_regularizer(method, Some(q))?;
        let gamma_q = reg.gamma_q(q)?;
        for lambda in [1e-1, 1e-2, 1e-3] {
            let sup = qualification_sup(&reg, q, lambda, DEFAULT_GRID);
            let bound = gamma_q * reg.effective_lambda(lambda).powf(q);
            println!("{:>9} q={q} lambda={lambda:.0e}: sup {sup:.4e} <= {bound:.4e}", method.id());
        }
    }
    let tik = make_regularizer(Method::Tikhonov, None)?;
    match tik.check_qualification(0.7, 0.5) {
        Ok(()) => println!("unexpected: gate accepted r + s = 1.2"),
        Err(e) => println!("gate: {e}"),
    }
    Ok(())
}
