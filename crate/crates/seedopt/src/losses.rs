//! The optimization objective, in two forms: plain scalar functions for
//! inspection and testing, and graph-node builders the optimizer
//! differentiates through.

use models::CentroidTable;
use tensor::{Graph, NodeId, Tensor};

use crate::SeedOptError;

/// Euclidean distance ‖μ − v_G‖₂ (not squared).
pub fn semantic_loss(v_g: &Tensor, mu: &Tensor) -> Result<f64, SeedOptError> {
    if v_g.shape() != mu.shape() {
        return Err(SeedOptError::DimensionMismatch(format!(
            "semantic loss: {:?} vs {:?}",
            v_g.shape(),
            mu.shape()
        )));
    }
    Ok(v_g
        .data()
        .iter()
        .zip(mu.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt())
}

/// Graph form of [`semantic_loss`]; `mu` enters as a constant leaf.
pub fn semantic_loss_node(g: &Graph, v_g: NodeId, mu: &Tensor) -> Result<NodeId, SeedOptError> {
    if g.shape(v_g) != mu.shape() {
        return Err(SeedOptError::DimensionMismatch(format!(
            "semantic loss: {:?} vs {:?}",
            g.shape(v_g),
            mu.shape()
        )));
    }
    Ok(g.l2_distance(v_g, g.leaf(mu))?)
}

/// Mean over references of the pixel-wise MSE to the generated latent:
/// (1/k)·Σᵢ MSE(zⁱ, z0_G).
pub fn appearance_loss(z0_g: &Tensor, reference_latents: &[Tensor]) -> Result<f64, SeedOptError> {
    if reference_latents.is_empty() {
        return Err(SeedOptError::EmptyReferences);
    }
    let mut total = 0.0;
    for z in reference_latents {
        if z.shape() != z0_g.shape() {
            return Err(SeedOptError::DimensionMismatch(format!(
                "appearance loss: {:?} vs {:?}",
                z.shape(),
                z0_g.shape()
            )));
        }
        let mse = z
            .data()
            .iter()
            .zip(z0_g.data())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / z.len() as f64;
        total += mse;
    }
    Ok(total / reference_latents.len() as f64)
}

/// Graph form of [`appearance_loss`]; references enter as constant leaves.
pub fn appearance_loss_node(
    g: &Graph,
    z0_g: NodeId,
    reference_latents: &[Tensor],
) -> Result<NodeId, SeedOptError> {
    if reference_latents.is_empty() {
        return Err(SeedOptError::EmptyReferences);
    }
    let mut terms = Vec::with_capacity(reference_latents.len());
    for z in reference_latents {
        if z.shape() != g.shape(z0_g) {
            return Err(SeedOptError::DimensionMismatch(format!(
                "appearance loss: {:?} vs {:?}",
                z.shape(),
                g.shape(z0_g)
            )));
        }
        terms.push(g.mse(g.leaf(z), z0_g)?);
    }
    Ok(g.mul_scalar(g.sum_nodes(&terms)?, 1.0 / reference_latents.len() as f64))
}

/// λ·semantic + (1−λ)·appearance.
pub fn total_loss(semantic: f64, appearance: f64, lambda: f64) -> Result<f64, SeedOptError> {
    check_lambda(lambda)?;
    Ok(lambda * semantic + (1.0 - lambda) * appearance)
}

pub(crate) fn check_lambda(lambda: f64) -> Result<(), SeedOptError> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(SeedOptError::LambdaOutOfRange(lambda));
    }
    Ok(())
}

/// −log softmax over negated centroid distances at the target class:
/// −log( exp(−dist(μ^c, v_G)) / Σ_{c'} exp(−dist(μ^{c'}, v_G)) ). Always ≥ 0;
/// exactly 0 when the table holds a single class.
pub fn contrastive_semantic_loss(
    v_g: &Tensor,
    table: &CentroidTable,
    target_class: usize,
) -> Result<f64, SeedOptError> {
    check_table(table, target_class)?;
    let mut denom = 0.0;
    let mut target_logit = 0.0;
    for (c, mu) in table.vecs.iter().enumerate() {
        let d = semantic_loss(v_g, mu)?;
        denom += (-d).exp();
        if c == target_class {
            target_logit = -d;
        }
    }
    Ok(denom.ln() - target_logit)
}

/// Graph form of [`contrastive_semantic_loss`]; centroids enter as constant
/// leaves.
pub fn contrastive_semantic_loss_node(
    g: &Graph,
    v_g: NodeId,
    table: &CentroidTable,
    target_class: usize,
) -> Result<NodeId, SeedOptError> {
    check_table(table, target_class)?;
    let mut exps = Vec::with_capacity(table.n_classes());
    let mut target = None;
    for (c, mu) in table.vecs.iter().enumerate() {
        let d = semantic_loss_node(g, v_g, mu)?;
        exps.push(g.exp(g.mul_scalar(d, -1.0)));
        if c == target_class {
            target = Some(d);
        }
    }
    let denom = g.ln(g.sum_nodes(&exps)?);
    Ok(g.add(denom, target.expect("target checked present"))?)
}

fn check_table(table: &CentroidTable, target_class: usize) -> Result<(), SeedOptError> {
    if target_class >= table.n_classes() {
        return Err(SeedOptError::MissingClass {
            id: target_class,
            n_classes: table.n_classes(),
        });
    }
    Ok(())
}
