use phasekey_core::channel::{honest_x_operator, observation_set, ChannelParams, Intensities};
use phasekey_core::sdp::{build_phase_error_problem, solve, virtual_states, CertStatus, ModelSet};
use rayon::prelude::*;

fn main() {
    let mut jobs = Vec::new();
    for q in [0.95, 0.992407, 1.0] {
        for loss in [0.0, 5.0, 30.0, 55.0, 60.0] {
            for mu in [0.05, 0.2, 0.45, 0.7, 0.95] {
                jobs.push((q, loss, mu));
            }
        }
    }
    let lines: Vec<String> = jobs
        .par_iter()
        .map(|&(q, loss, mu)| {
            let params = ChannelParams::new(loss, 1e-8).unwrap();
            let ints = Intensities::new(mu, mu / 5.0, 0.0).unwrap();
            let obs = observation_set(&ints, &params);
            let models = match ModelSet::build(mu, mu / 5.0, 0.0, q, 9) {
                Ok(m) => m,
                Err(_) => return format!("q {q} loss {loss:4} mu {mu:.2}: MODEL-SKIP"),
            };
            let vsp = virtual_states(models.signal.eigenvector(1)).unwrap();
            let mut out = Vec::new();
            for beta in 0..2 {
                let problem = build_phase_error_problem(beta, &models, &obs, &vsp).unwrap();
                let witness_op = honest_x_operator(&params, 9, 1 - beta);
                let witness = problem.objective.trace_product(&witness_op).unwrap();
                match solve(&problem, 1e-8) {
                    Ok(cert) => {
                        let wgap = cert.certified_bound - witness;
                        let saved = cert.status != CertStatus::Optimal && wgap <= 1e-8;
                        if cert.status != CertStatus::Optimal {
                            out.push(format!(
                                "q {q} loss {loss:4} mu {mu:.2} b{beta}: STALL gap {:.2e} wgap {:.2e}{}",
                                cert.gap, wgap, if saved { " WITNESS-OK" } else { " REFUSED" }
                            ));
                        }
                    }
                    Err(e) => out.push(format!("q {q} loss {loss:4} mu {mu:.2} b{beta}: ERR {e}")),
                }
            }
            out.join("\n")
        })
        .collect();
    let mut stalls = 0;
    let mut refused = 0;
    for l in lines.iter().filter(|l| !l.is_empty()) {
        if l.contains("STALL") { stalls += l.matches("STALL").count(); }
        if l.contains("REFUSED") { refused += l.matches("REFUSED").count(); }
        println!("{l}");
    }
    println!("== stalls {stalls}, still refused {refused}, of 150");
}
