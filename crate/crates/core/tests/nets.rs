use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thermosplat_core::encoding::{EncodingConfig, InputFrame};
use thermosplat_core::nn::*;

const STEP: f64 = 1e-5;
const PROBES: usize = 100;

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}

#[test]
fn mlp_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    let mut net = Mlp::new(&[5, 7, 6, 3], 1.0, &mut rng).unwrap();
    let batch = 4;
    let x: Vec<f64> = (0..5 * batch).map(|_| rng.random_range(-1.0..1.0)).collect();
    let wts: Vec<f64> = (0..3 * batch).map(|_| rng.random_range(-1.0..1.0)).collect();
    let loss = |net: &Mlp, x: &[f64]| -> f64 {
        let (y, _) = net.forward_batch(x, batch).unwrap();
        y.iter().zip(&wts).map(|(a, b)| a * b).sum()
    };
    let (_, tape) = net.forward_batch(&x, batch).unwrap();
    let (gp, gx) = net.backward(&tape, &wts).unwrap();
    let mut worst: f64 = 0.0;
    for _ in 0..PROBES {
        let i = rng.random_range(0..gp.len());
        let orig = net.params()[i];
        net.params_mut()[i] = orig + STEP;
        let up = loss(&net, &x);
        net.params_mut()[i] = orig - STEP;
        let down = loss(&net, &x);
        net.params_mut()[i] = orig;
        worst = worst.max(rel_err(gp[i], (up - down) / (2.0 * STEP)));
    }
    for i in 0..x.len() {
        let mut a = x.clone();
        let mut b = x.clone();
        a[i] += STEP;
        b[i] -= STEP;
        worst = worst.max(rel_err(gx[i], (loss(&net, &a) - loss(&net, &b)) / (2.0 * STEP)));
    }
    assert!(worst < 1e-4, "worst {worst}");
}

fn frame() -> InputFrame {
    InputFrame::new(0.0, 21600.0, ([-6.0, -6.0, 0.0], [6.0, 6.0, 0.4]))
}

#[test]
fn temp_net_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let cfg = NetConfig {
        output_gain: 1.0,
        ..NetConfig::default()
    };
    let mut net = TempNet::new(
        &cfg,
        frame(),
        EncodingConfig::new(4),
        EncodingConfig::new(6),
        (273.15, 313.15),
        &mut rng,
    )
    .unwrap();
    let n = 6;
    let times: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..21600.0)).collect();
    let pos: Vec<[f64; 3]> = (0..n)
        .map(|_| [rng.random_range(-6.0..6.0), rng.random_range(-6.0..6.0), rng.random_range(0.0..0.4)])
        .collect();
    let wts: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let loss = |net: &TempNet| -> f64 {
        let (y, _) = net.forward(&times, &pos).unwrap();
        y.iter().zip(&wts).map(|(a, b)| a * b).sum()
    };
    let (_, tape) = net.forward(&times, &pos).unwrap();
    let mut g = vec![0.0; net.mlp.params().len()];
    net.backward_into(&tape, &wts, &mut g).unwrap();
    let mut worst: f64 = 0.0;
    for _ in 0..PROBES {
        let i = rng.random_range(0..g.len());
        let orig = net.mlp.params()[i];
        net.mlp.params_mut()[i] = orig + STEP;
        let up = loss(&net);
        net.mlp.params_mut()[i] = orig - STEP;
        let down = loss(&net);
        net.mlp.params_mut()[i] = orig;
        worst = worst.max(rel_err(g[i], (up - down) / (2.0 * STEP)));
    }
    assert!(worst < 1e-4, "worst {worst}");
}

fn head_params(net: &mut ThermalNet, head: usize) -> &mut [f64] {
    match head {
        0 => net.e_net.params_mut(),
        1 => net.c_net.params_mut(),
        _ => net.h_net.params_mut(),
    }
}

#[test]
fn thermal_net_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    let cfg = NetConfig {
        output_gain: 1.0,
        ..NetConfig::default()
    };
    let f = 8;
    let mut net = ThermalNet::new(
        &cfg,
        frame(),
        EncodingConfig::new(4),
        EncodingConfig::new(6),
        f,
        (273.15, 313.15),
        &mut rng,
    )
    .unwrap();
    let n = 5;
    let temps: Vec<f64> = (0..n).map(|_| rng.random_range(280.0..305.0)).collect();
    let times: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..21600.0)).collect();
    let feats: Vec<f64> = (0..n * f).map(|_| rng.random_range(0.0..1.0)).collect();
    let pos: Vec<[f64; 3]> = (0..n)
        .map(|_| [rng.random_range(-6.0..6.0), rng.random_range(-6.0..6.0), rng.random_range(0.0..0.4)])
        .collect();
    // Scale the cotangents so each head contributes comparably.
    let wts: Vec<ParamGrad> = (0..n)
        .map(|_| ParamGrad {
            e: rng.random_range(-1.0..1.0),
            c: rng.random_range(-0.1..0.1),
            h: rng.random_range(-1e-5..1e-5),
        })
        .collect();
    let loss = |net: &ThermalNet| -> f64 {
        let (p, _) = net.forward(&temps, &times, &feats, &pos).unwrap();
        p.iter().zip(&wts).map(|(p, w)| p.e * w.e + p.c * w.c + p.h * w.h).sum()
    };
    let (_, tape) = net.forward(&temps, &times, &feats, &pos).unwrap();
    let mut ge = vec![0.0; net.e_net.params().len()];
    let mut gc = vec![0.0; net.c_net.params().len()];
    let mut gh = vec![0.0; net.h_net.params().len()];
    net.backward_into(&tape, &wts, (&mut ge, &mut gc, &mut gh)).unwrap();
    let mut worst: f64 = 0.0;
    for head in 0..3 {
        for _ in 0..PROBES {
            let (len, g) = match head {
                0 => (ge.len(), &ge),
                1 => (gc.len(), &gc),
                _ => (gh.len(), &gh),
            };
            let i = rng.random_range(0..len);
            let orig = head_params(&mut net, head)[i];
            head_params(&mut net, head)[i] = orig + STEP;
            let up = loss(&net);
            head_params(&mut net, head)[i] = orig - STEP;
            let down = loss(&net);
            head_params(&mut net, head)[i] = orig;
            worst = worst.max(rel_err(g[i], (up - down) / (2.0 * STEP)));
        }
    }
    assert!(worst < 1e-4, "worst {worst}");
}

#[test]
fn thermal_net_temperature_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    let cfg = NetConfig {
        output_gain: 1.0,
        ..NetConfig::default()
    };
    let f = 8;
    let net = ThermalNet::new(
        &cfg,
        frame(),
        EncodingConfig::new(4),
        EncodingConfig::new(6),
        f,
        (273.15, 313.15),
        &mut rng,
    )
    .unwrap();
    let n = 6;
    let temps: Vec<f64> = (0..n).map(|_| rng.random_range(280.0..305.0)).collect();
    let times: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..21600.0)).collect();
    let feats: Vec<f64> = (0..n * f).map(|_| rng.random_range(0.0..1.0)).collect();
    let pos: Vec<[f64; 3]> = (0..n)
        .map(|_| [rng.random_range(-6.0..6.0), rng.random_range(-6.0..6.0), rng.random_range(0.0..0.4)])
        .collect();
    let wts: Vec<ParamGrad> = (0..n)
        .map(|_| ParamGrad {
            e: rng.random_range(-1.0..1.0),
            c: rng.random_range(-0.1..0.1),
            h: rng.random_range(-1e-5..1e-5),
        })
        .collect();
    let loss = |temps: &[f64]| -> f64 {
        let (p, _) = net.forward(temps, &times, &feats, &pos).unwrap();
        p.iter().zip(&wts).map(|(p, w)| p.e * w.e + p.c * w.c + p.h * w.h).sum()
    };
    let (_, tape) = net.forward(&temps, &times, &feats, &pos).unwrap();
    let mut ge = vec![0.0; net.e_net.params().len()];
    let mut gc = vec![0.0; net.c_net.params().len()];
    let mut gh = vec![0.0; net.h_net.params().len()];
    let d_temp = net.backward_with_temp(&tape, &wts, (&mut ge, &mut gc, &mut gh)).unwrap();
    assert_eq!(d_temp.len(), n);
    // Parameter gradients are unaffected by also asking for the input gradient.
    let mut ge2 = vec![0.0; ge.len()];
    let mut gc2 = vec![0.0; gc.len()];
    let mut gh2 = vec![0.0; gh.len()];
    net.backward_into(&tape, &wts, (&mut ge2, &mut gc2, &mut gh2)).unwrap();
    assert_eq!((ge, gc, gh), (ge2, gc2, gh2));
    let h = 1e-4;
    for r in 0..n {
        let mut up = temps.clone();
        up[r] += h;
        let mut down = temps.clone();
        down[r] -= h;
        let num = (loss(&up) - loss(&down)) / (2.0 * h);
        assert!(rel_err(d_temp[r], num) < 1e-4, "row {r}: {} vs {num}", d_temp[r]);
    }
}
