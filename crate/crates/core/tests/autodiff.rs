use hsrecon::autodiff::{Conv2dSpec, ParamSet, Tape, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(
        shape.to_vec(),
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(),
    )
    .unwrap()
}

struct Naive {
    y: Vec<f64>,
    dx: Vec<f64>,
    dw: Vec<f64>,
    db: Vec<f64>,
}

/// Six nested loops over (o, oy, ox, c, ky, kx), with the gradients of
/// `Σ r ⊙ y` accumulated alongside.
#[allow(clippy::too_many_arguments, clippy::needless_range_loop)]
fn naive_conv(
    x: &[f64],
    w: &[f64],
    b: &[f64],
    r: &[f64],
    dims: (usize, usize, usize, usize, usize),
    s: Conv2dSpec,
) -> Naive {
    let (c, h, wd, o, k) = dims;
    let ho = (h + 2 * s.padding - k) / s.stride + 1;
    let wo = (wd + 2 * s.padding - k) / s.stride + 1;
    let mut out = Naive {
        y: vec![0.0; o * ho * wo],
        dx: vec![0.0; x.len()],
        dw: vec![0.0; w.len()],
        db: vec![0.0; o],
    };
    for oc in 0..o {
        for oy in 0..ho {
            for ox in 0..wo {
                let yi = (oc * ho + oy) * wo + ox;
                let g = r[yi];
                let mut acc = b[oc];
                out.db[oc] += g;
                for ic in 0..c {
                    for ky in 0..k {
                        for kx in 0..k {
                            let iy = (oy * s.stride + ky) as isize - s.padding as isize;
                            let ix = (ox * s.stride + kx) as isize - s.padding as isize;
                            if iy < 0 || ix < 0 || iy >= h as isize || ix >= wd as isize {
                                continue;
                            }
                            let xi = (ic * h + iy as usize) * wd + ix as usize;
                            let wi = ((oc * c + ic) * k + ky) * k + kx;
                            acc += w[wi] * x[xi];
                            out.dw[wi] += g * x[xi];
                            out.dx[xi] += g * w[wi];
                        }
                    }
                }
                out.y[yi] = acc;
            }
        }
    }
    out
}

fn max_dev(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(p, q)| (p - q).abs())
        .fold(0.0, f64::max)
}

#[test]
fn convolution_matches_naive_loops() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for case in 0..40 {
        let c = rng.random_range(1..4);
        let o = rng.random_range(1..4);
        let k = [1, 3, 5][case % 3];
        let h = rng.random_range(k..k + 6);
        let wd = rng.random_range(k..k + 6);
        let spec = if case % 2 == 0 {
            Conv2dSpec::same(k)
        } else {
            Conv2dSpec {
                stride: rng.random_range(1..3),
                padding: rng.random_range(0..k / 2 + 1),
            }
        };
        let x = random(&mut rng, &[c, h, wd]);
        let mut params = ParamSet::new();
        let wid = params.add("w", random(&mut rng, &[o, c, k, k]));
        let bid = params.add("b", random(&mut rng, &[o]));

        let mut tape = Tape::new();
        let xv = tape.leaf(x.clone(), true);
        let wv = tape.param(&params, wid);
        let bv = tape.param(&params, bid);
        let y = tape.conv2d(xv, wv, bv, spec).unwrap();
        let r = random(&mut rng, tape.value(y).shape());
        let rv = tape.constant(r.clone());
        let p = tape.mul(y, rv).unwrap();
        let loss = tape.sum(p);
        let mut grads = params.zero_grads();
        tape.backward(loss, &mut grads).unwrap();

        let naive = naive_conv(
            x.data(),
            params.value(wid).data(),
            params.value(bid).data(),
            r.data(),
            (c, h, wd, o, k),
            spec,
        );
        assert!(
            max_dev(tape.value(y).data(), &naive.y) < 1e-10,
            "case {case}: forward"
        );
        assert!(
            max_dev(tape.grad(xv).data(), &naive.dx) < 1e-10,
            "case {case}: dx"
        );
        assert!(
            max_dev(grads.get(wid), &naive.dw) < 1e-10,
            "case {case}: dw"
        );
        assert!(
            max_dev(grads.get(bid), &naive.db) < 1e-10,
            "case {case}: db"
        );
    }
}

#[test]
fn float_and_double_tapes_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = random(&mut rng, &[2, 7, 7]);
    let w = random(&mut rng, &[3, 2, 3, 3]);
    let run64 = {
        let mut t = Tape::<f64>::inference();
        let (a, b, z) = (
            t.constant(x.clone()),
            t.constant(w.clone()),
            t.constant(Tensor::zeros(&[3])),
        );
        let y = t.conv2d(a, b, z, Conv2dSpec::same(3)).unwrap();
        t.take_value(y)
    };
    let run32 = {
        let mut t = Tape::<f32>::inference();
        let (a, b, z) = (
            t.constant(x.cast()),
            t.constant(w.cast()),
            t.constant(Tensor::zeros(&[3])),
        );
        let y = t.conv2d(a, b, z, Conv2dSpec::same(3)).unwrap();
        t.take_value(y)
    };
    let back: Tensor<f64> = run32.cast();
    assert!(max_dev(back.data(), run64.data()) < 1e-5);
}
