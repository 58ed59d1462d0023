use dinfer_core::model::{one_hot, softmax_rows, Activation, ArchSpec, Loss, Model, Objective};
use dinfer_core::rng::rng_from;
use ndarray::Array2;
use rand::Rng;

const CASES: u64 = 20;
const H: f64 = 1e-6;

fn archs() -> Vec<(&'static str, ArchSpec)> {
    vec![
        ("linear", ArchSpec::linear(7, 4)),
        ("mlp_relu", ArchSpec::mlp(7, vec![9, 6], 4, Activation::Relu)),
        ("mlp_tanh", ArchSpec::mlp(7, vec![9, 6], 4, Activation::Tanh)),
    ]
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / scale(a).max(scale(b)).max(1e-12)
}

fn random_input(rng: &mut impl Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.random_range(0.0..1.0)).collect()
}

fn objective_value(model: &Model, x: &[f64], obj: Objective) -> f64 {
    let z = model.forward(x).unwrap();
    match obj {
        Objective::LogitOf(k) => z[k],
        Objective::MarginTo(k) => {
            let rest = z.iter().enumerate().filter(|&(j, _)| j != k).map(|(_, &v)| v).fold(f64::NEG_INFINITY, f64::max);
            z[k] - rest
        }
    }
}

#[test]
fn input_gradients_match_central_differences() {
    for (name, arch) in archs() {
        for case in 0..CASES {
            let model = Model::init(arch.clone(), 100 + case).unwrap();
            let mut rng = rng_from(case);
            let x = random_input(&mut rng, arch.input_dim);
            let k = rng.random_range(0..arch.num_classes);
            for obj in [Objective::LogitOf(k), Objective::MarginTo(k)] {
                let g = model.input_gradient(&x, obj).unwrap();
                let fd: Vec<f64> = (0..x.len())
                    .map(|i| {
                        let (mut xp, mut xm) = (x.clone(), x.clone());
                        xp[i] += H;
                        xm[i] -= H;
                        (objective_value(&model, &xp, obj) - objective_value(&model, &xm, obj)) / (2.0 * H)
                    })
                    .collect();
                let e = rel_err(&g, &fd);
                assert!(e < 1e-3, "{name} case {case} {obj:?}: relative error {e}");
            }
        }
    }
}

#[test]
fn parameter_gradients_match_central_differences() {
    for (name, arch) in archs() {
        for case in 0..CASES {
            let model = Model::init(arch.clone(), 200 + case).unwrap();
            let mut rng = rng_from(1000 + case);
            let n = 5;
            let rows: Vec<f64> = (0..n).flat_map(|_| random_input(&mut rng, arch.input_dim)).collect();
            let x = Array2::from_shape_vec((n, arch.input_dim), rows).unwrap();
            let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..arch.num_classes)).collect();
            let hard = one_hot(&labels, arch.num_classes);
            let teacher_logits = Array2::from_shape_fn((n, arch.num_classes), |_| rng.random_range(-2.0..2.0));
            let soft = softmax_rows(&teacher_logits);
            for (loss, targets) in [(Loss::CrossEntropy, &hard), (Loss::KlToTeacher, &soft)] {
                let (_, g) = model.loss_and_grad(x.view(), targets.view(), loss).unwrap();
                let fd: Vec<f64> = (0..model.params.len())
                    .map(|i| {
                        let (mut mp, mut mm) = (model.clone(), model.clone());
                        mp.params[i] += H;
                        mm.params[i] -= H;
                        (mp.loss(x.view(), targets.view(), loss).unwrap() - mm.loss(x.view(), targets.view(), loss).unwrap())
                            / (2.0 * H)
                    })
                    .collect();
                let e = rel_err(&g, &fd);
                assert!(e < 1e-3, "{name} case {case} {loss:?}: relative error {e}");
            }
        }
    }
}

#[test]
fn kl_to_itself_is_zero() {
    let model = Model::init(ArchSpec::mlp(3, vec![5], 3, Activation::Tanh), 4).unwrap();
    let x = Array2::from_shape_vec((2, 3), vec![0.1, 0.5, 0.9, 0.3, 0.3, 0.7]).unwrap();
    let own = softmax_rows(&model.logits(x.view()).unwrap());
    let l = model.loss(x.view(), own.view(), Loss::KlToTeacher).unwrap();
    assert!(l.abs() < 1e-12, "{l}");
}
