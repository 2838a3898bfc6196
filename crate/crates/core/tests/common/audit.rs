//! Which parameters each VQ loss term reaches.

use vqmimo_core::autodiff::Tape;
use vqmimo_core::loss::vq_graph;
use vqmimo_core::model::{ArchitectureSpec, Aux, Mode, ModelBundle, ModelKind};
use vqmimo_core::rng::gaussian_vec;
use vqmimo_core::tensor::Tensor;

pub enum Term {
    Vq,
    Commit,
}

pub fn small_vq_model(seed: u64) -> ModelBundle<f64> {
    ModelBundle::new(
        ModelKind::VqVae,
        ArchitectureSpec::default_for(4, 4, 8, 8).unwrap(),
        seed,
    )
    .unwrap()
}

/// `(parameter name, gradient is exactly zero)` after back-propagating one
/// term of the VQ loss through a real forward pass.
pub fn term_grads(model: &ModelBundle<f64>, term: Term) -> Vec<(String, bool)> {
    let mut tape = Tape::new();
    let bound = model.params.bind(&mut tape, true);
    let x = tape.constant(Tensor::from_vec(&[2, 4, 8, 8], gaussian_vec(9, 512)).unwrap());
    let fwd = model
        .forward_graph(&mut tape, &bound, x, Mode::Train, None, 0)
        .unwrap();
    let Aux::Quantized { z_e, z_q, .. } = fwd.aux else {
        panic!("vq aux")
    };
    let (vq, commit) = vq_graph(&mut tape, z_e, z_q, 0.25).unwrap();
    tape.backward(match term {
        Term::Vq => vq,
        Term::Commit => commit,
    })
    .unwrap();
    model
        .params
        .names()
        .iter()
        .zip(bound.vars())
        .map(|(n, &v)| {
            (
                n.clone(),
                tape.grad(v).is_none_or(|g| g.iter().all(|&x| x == 0.0)),
            )
        })
        .collect()
}

/// The vq term leaves every non-codebook parameter untouched and the commit
/// term leaves the codebook and decoder untouched, while each still moves
/// what it should.
pub fn stop_gradient_audit(seed: u64) -> bool {
    let model = small_vq_model(seed);
    let vq_ok = term_grads(&model, Term::Vq)
        .iter()
        .all(|(n, zero)| *zero == (n != "codebook"));
    let commit_ok = term_grads(&model, Term::Commit).iter().all(|(n, zero)| {
        if n == "codebook" || n.starts_with("dec.") {
            *zero
        } else if n.starts_with("enc.") && n.ends_with("weight") {
            !*zero
        } else {
            true
        }
    });
    vq_ok && commit_ok
}
