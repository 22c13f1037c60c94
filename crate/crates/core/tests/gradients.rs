mod common;

use common::grads::{self, INSTANCES};

fn each(check: impl Fn(u64) -> grads::Check) {
    for seed in 0..INSTANCES {
        if let Err(e) = check(seed) {
            panic!("{e}");
        }
    }
}

#[test]
fn encoder_forward() {
    each(grads::encoder);
}

#[test]
fn relational_fact_loss() {
    each(|s| grads::fact_loss(s, false));
}

#[test]
fn literal_fact_loss() {
    each(|s| grads::fact_loss(s, true));
}

#[test]
fn claim_loss() {
    grads::claim_loss_all().unwrap();
}

#[test]
fn string_alignment_network() {
    each(grads::string_alignment);
}

#[test]
fn literal_entity_network() {
    each(grads::literal_entity);
}

#[test]
fn gradients_reach_every_path() {
    grads::gradients_reach_truth_parameters().unwrap();
}
