//! Three operations for the static demo page in `www/`. Each takes plain
//! numbers or text and returns a JSON string; failures come back as
//! `{"error": "..."}` so the page never has to catch exceptions.

use std::sync::Arc;

use serde::Serialize;
use serde_json::json;
use wasm_bindgen::prelude::*;

use dinfer_core::embed::{walk_fixed_direction, NoiseFamily};
use dinfer_core::model::{ArchSpec, Model};
use dinfer_core::oracle::LocalOracle;
use dinfer_core::rng::rng_from;
use dinfer_core::stats::{harmonic_mean_p, welch_one_sided};
use dinfer_core::theory::{monte_carlo_verify, TheoryParams};

fn respond<T: Serialize>(r: dinfer_core::Result<T>) -> String {
    match r {
        Ok(v) => serde_json::to_string(&v).unwrap_or_else(|e| json!({ "error": e.to_string() }).to_string()),
        Err(e) => json!({ "error": e.to_string() }).to_string(),
    }
}

/// Monte Carlo estimates of the margin gap, membership and dataset
/// inference accuracies for the linear model, next to their closed forms.
#[wasm_bindgen]
pub fn theory_check(d: usize, m: usize, sigma: f64, trials: usize, seed: u64) -> String {
    respond(TheoryParams::with_unit_u(10, d, sigma, m).and_then(|p| monte_carlo_verify(&p, trials, seed)))
}

/// Three-class linear model on the unit square, regions meeting near the centre.
pub fn toy_model() -> Model {
    let mut m = Model::zeros(ArchSpec::linear(2, 3)).expect("valid arch");
    // rows are classes: weights (x, y) then the three biases
    m.params = vec![-4.0, -4.0, 4.0, -2.0, -2.0, 4.0, 2.2, -0.6, -0.6];
    m
}

#[derive(Serialize)]
struct WalkView {
    family: NoiseFamily,
    direction: [f64; 2],
    steps: Option<usize>,
    distance: f64,
    end: [f64; 2],
}

#[derive(Serialize)]
struct BlindWalkView {
    label: usize,
    cap: f64,
    walks: Vec<WalkView>,
    /// Predicted class on a `grid x grid` lattice, row-major from the top.
    regions: Vec<usize>,
    grid: usize,
}

/// Blind Walk from `(x, y)` on the toy model: `repeats` random directions
/// per noise family, each walked until the predicted label changes.
#[wasm_bindgen]
pub fn blind_walk_2d(x: f64, y: f64, noise_scale: f64, repeats: usize, max_steps: usize, seed: u64) -> String {
    respond(blind_walk_inner([x, y], noise_scale, repeats, max_steps, seed))
}

fn blind_walk_inner(p: [f64; 2], scale: f64, repeats: usize, max_steps: usize, seed: u64) -> dinfer_core::Result<BlindWalkView> {
    use dinfer_core::Error;
    if !(0.0..=1.0).contains(&p[0]) || !(0.0..=1.0).contains(&p[1]) {
        return Err(Error::InvalidParameter("the point must lie in the unit square".into()));
    }
    if !(scale > 0.0) || repeats == 0 || repeats > 200 || max_steps == 0 || max_steps > 10_000 {
        return Err(Error::InvalidParameter("need scale > 0, 1..=200 repeats and 1..=10000 steps".into()));
    }
    let model = Arc::new(toy_model());
    let label = model.predict(&p)?;
    let oracle = LocalOracle::new(model.clone()).label_only();
    let cap = max_steps as f64 * scale * 2f64.sqrt();
    let mut rng = rng_from(seed);
    let mut walks = Vec::new();
    for family in [NoiseFamily::Uniform, NoiseFamily::Gaussian, NoiseFamily::Laplace] {
        for _ in 0..repeats {
            let d = [family.sample(&mut rng, scale), family.sample(&mut rng, scale)];
            let w = walk_fixed_direction(&oracle, &p, label, &d, family.matched_norm(), max_steps, cap)?;
            let k = w.steps.unwrap_or(max_steps) as f64;
            let end = [(p[0] + k * d[0]).clamp(0.0, 1.0), (p[1] + k * d[1]).clamp(0.0, 1.0)];
            walks.push(WalkView { family, direction: d, steps: w.steps, distance: w.distance, end });
        }
    }
    let grid = 60;
    let mut regions = Vec::with_capacity(grid * grid);
    for r in 0..grid {
        for c in 0..grid {
            let q = [(c as f64 + 0.5) / grid as f64, 1.0 - (r as f64 + 0.5) / grid as f64];
            regions.push(model.predict(&q)?);
        }
    }
    Ok(BlindWalkView { label, cap, walks, regions, grid })
}

fn parse_numbers(s: &str) -> dinfer_core::Result<Vec<f64>> {
    s.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<f64>().map_err(|_| dinfer_core::Error::InvalidParameter(format!("not a number: {t}"))))
        .collect()
}

/// One-sided Welch test that `public` scores exceed `private` ones.
#[wasm_bindgen]
pub fn welch(public: &str, private: &str) -> String {
    respond((|| welch_one_sided(&parse_numbers(public)?, &parse_numbers(private)?))())
}

#[wasm_bindgen]
pub fn harmonic_mean(p_values: &str) -> String {
    respond(parse_numbers(p_values).and_then(|ps| harmonic_mean_p(&ps)).map(|p| json!({ "harmonic_mean_p": p })))
}
