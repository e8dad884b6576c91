//! Acceptance gate for the library: one test per criterion, each printing a
//! PASS line with the measured evidence. Tolerances are pinned here, not in
//! the code under test.

use nibblegemm::nn::{
    self, float_conv_forward, quantized_conv_forward, Activation, ConvInput, LayerSpec, Network,
    Tensor,
};
use nibblegemm::pack::{pack_lhs, pack_rhs, unpack_lhs, unpack_rhs};
use nibblegemm::qgemm::{conv_channel_limit, qgemm, AccumulatorMode, GemmConfig};
use nibblegemm::quant::{
    compute_quant_params, dequantize_values, quantize_values, QuantParams, QuantizedMatrix,
};
use nibblegemm::reference::{compare_i32, oracle_quantized_product};
use nibblegemm::Error;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

fn random_q4(rng: &mut StdRng, rows: usize, cols: usize) -> QuantizedMatrix {
    let params = QuantParams::new(
        rng.random_range(0.01f32..2.0),
        rng.random_range(0..16),
        4,
    )
    .unwrap();
    let data = (0..rows * cols).map(|_| rng.random_range(0..16)).collect();
    QuantizedMatrix::from_parts(rows, cols, data, params).unwrap()
}

fn check_case(
    rng: &mut StdRng,
    m: usize,
    n: usize,
    d: usize,
    kernel_height: usize,
    mode: AccumulatorMode,
    label: &str,
) {
    let w = random_q4(rng, m, d);
    let x = random_q4(rng, d, n);
    let config = GemmConfig { kernel_height, accumulator_mode: mode, bits: 4, unchecked: false };
    let result = qgemm(&w, &x, &config).unwrap();
    let oracle = oracle_quantized_product(&w, &x).unwrap();
    let report = compare_i32(&result.values, &oracle, n);
    assert!(
        report.pass,
        "{label}: mismatch at {:?} for m={m} n={n} d={d} kh={kernel_height} mode={mode:?}",
        report.first_mismatch
    );
    let expected_scale = w.params().scale * x.params().scale;
    assert_eq!(result.result_scale, expected_scale, "{label}: scale drifted");
}

/// Criterion 1: the packed 16-bit-lane product equals the naive
/// `(w - z_w)(x - z_x)` oracle exactly on >= 1000 randomized shapes covering
/// both kernel heights, every panel tail residue, and both 16-bit modes.
#[test]
fn criterion_1_exact_gemm_equivalence() {
    let mut rng = StdRng::seed_from_u64(0x01);
    let mut cases = 0usize;

    let m_list = [1, 2, 3, 7, 8, 9, 15, 16, 17, 23, 24, 25, 31, 47, 48, 49];
    let n_list = [1, 2, 3, 4, 5, 8, 9];
    let d_cycle = [1, 2, 3, 144, 145];
    for kernel_height in [8, 24] {
        for (i, &m) in m_list.iter().enumerate() {
            for (j, &n) in n_list.iter().enumerate() {
                let d = d_cycle[(i + j) % d_cycle.len()];
                check_case(&mut rng, m, n, d, kernel_height, AccumulatorMode::Signed16, "structured");
                cases += 1;
            }
        }
    }

    while cases < 1000 {
        let m = rng.random_range(1..=64);
        let n = rng.random_range(1..=64);
        let d = rng.random_range(1..=145);
        let kernel_height = if rng.random::<bool>() { 8 } else { 24 };
        let mode = if rng.random::<bool>() {
            AccumulatorMode::Signed16
        } else {
            AccumulatorMode::Unsigned16Extended
        };
        check_case(&mut rng, m, n, d, kernel_height, mode, "random");
        cases += 1;
    }

    // Extended-range depths past the signed bound.
    for _ in 0..40 {
        let m = rng.random_range(1..=32);
        let n = rng.random_range(1..=16);
        let d = rng.random_range(146..=291);
        let kernel_height = if rng.random::<bool>() { 8 } else { 24 };
        check_case(&mut rng, m, n, d, kernel_height, AccumulatorMode::Unsigned16Extended, "extended");
        cases += 1;
    }

    println!("ACCEPTANCE 1 (exact GEMM equivalence over {cases} randomized cases): PASS");
}

/// Criterion 2: depth bounds are exact — the boundary depth multiplies
/// worst-case operands without error, one past it is refused, and the
/// refusal names the bound.
#[test]
fn criterion_2_overflow_boundaries() {
    let worst = |d: usize| {
        let p = QuantParams::new(1.0, 0, 4).unwrap();
        (
            QuantizedMatrix::from_parts(3, d, vec![15; 3 * d], p).unwrap(),
            QuantizedMatrix::from_parts(d, 5, vec![15; d * 5], p).unwrap(),
        )
    };

    for (mode, limit) in [
        (AccumulatorMode::Signed16, 145usize),
        (AccumulatorMode::Unsigned16Extended, 291),
    ] {
        let config = GemmConfig { kernel_height: 8, accumulator_mode: mode, bits: 4, unchecked: false };
        let (w, x) = worst(limit);
        let r = qgemm(&w, &x, &config).unwrap();
        assert!(r.values.iter().all(|&v| v == (limit * 225) as i32), "{mode:?} boundary value");

        let (w, x) = worst(limit + 1);
        match qgemm(&w, &x, &config) {
            Err(Error::DepthOverflowRisk { depth, max }) => {
                assert_eq!((depth, max), (limit + 1, limit));
            }
            other => panic!("expected overflow refusal for {mode:?}, got {other:?}"),
        }
    }
    println!("ACCEPTANCE 2 (accumulator depth bounds 145/291 exact and enforced): PASS");
}

/// Criterion 3: the channel-limit table for 4-bit operands in 16-bit
/// accumulators — 145 channels at 1x1, 16 at 3x3, 5 at 5x5.
#[test]
fn criterion_3_channel_limit_table() {
    assert_eq!(conv_channel_limit(4, 16, 1, 1), 145);
    assert_eq!(conv_channel_limit(4, 16, 3, 3), 16);
    assert_eq!(conv_channel_limit(4, 16, 5, 5), 5);
    println!("ACCEPTANCE 3 (channel limits 145/16/5 for 1x1, 3x3, 5x5): PASS");
}

/// Criterion 4: quantization invariants over 100000 random tensors — levels
/// in range, round-trip error strictly below one scale step, zero exact,
/// order preserved.
#[test]
fn criterion_4_quantization_invariants() {
    let mut rng = StdRng::seed_from_u64(0x04);
    let tensors = 100_000usize;
    for t in 0..tensors {
        let bits = if t % 2 == 0 { 4 } else { 8 };
        let magnitude = 10f32.powf(rng.random_range(-3.0f32..3.0));
        let n = rng.random_range(1..=32);
        let mut values: Vec<f32> = match t % 5 {
            // Mixed-sign, positive-only, negative-only, and sparse shapes.
            0 | 3 => (0..n).map(|_| rng.random_range(-magnitude..magnitude)).collect(),
            1 => (0..n).map(|_| rng.random_range(0.0..magnitude)).collect(),
            2 => (0..n).map(|_| rng.random_range(-magnitude..0.0)).collect(),
            _ => (0..n)
                .map(|_| if rng.random::<bool>() { 0.0 } else { rng.random_range(-magnitude..magnitude) })
                .collect(),
        };
        if t % 7 == 0 {
            values[0] = 0.0;
        }
        let params = compute_quant_params(&values, bits).unwrap();
        let levels = quantize_values(&values, &params);
        let back = dequantize_values(&levels, &params);

        let qmax = params.qmax();
        let mut prev: Option<(f32, u8)> = None;
        let mut sorted: Vec<(f32, u8)> = values.iter().copied().zip(levels.iter().copied()).collect();
        sorted.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        for (&v, (&q, &b)) in values.iter().zip(levels.iter().zip(back.iter())) {
            assert!(q <= qmax, "tensor {t}: level {q} out of range");
            let err = (v - b).abs();
            assert!(err < params.scale, "tensor {t}: round-trip error {err} >= scale {} (v={v})", params.scale);
        }
        for (v, q) in sorted {
            if let Some((pv, pq)) = prev {
                assert!(pq <= q, "tensor {t}: order reversed ({pv} -> {pq}, {v} -> {q})");
            }
            prev = Some((v, q));
        }
        // Zero is always on the grid.
        let zq = quantize_values(&[0.0], &params);
        assert_eq!(zq[0], params.zero_point, "tensor {t}: zero off-grid");
        assert_eq!(dequantize_values(&zq, &params)[0], 0.0, "tensor {t}: zero not exact");
    }
    println!("ACCEPTANCE 4 (quantization invariants over {tensors} random tensors): PASS");
}

/// Criterion 5: packing is lossless — unpack(pack(m)) == m across panel
/// residues for both layouts, and the depth sums match brute force.
#[test]
fn criterion_5_packing_round_trip() {
    let mut rng = StdRng::seed_from_u64(0x05);
    let mut cases = 0usize;
    let dims = [1, 2, 3, 4, 5, 7, 8, 9, 12, 16, 23, 24, 25, 31, 48, 49];
    for &rows in &dims {
        for &depth in &[1usize, 2, 3, 5, 8, 9, 16, 29] {
            let w = random_q4(&mut rng, rows, depth);
            for kernel_height in [8, 24] {
                let p = pack_lhs(&w, kernel_height).unwrap();
                assert_eq!(unpack_lhs(&p), w.data(), "lhs rows={rows} depth={depth} kh={kernel_height}");
                for r in 0..rows {
                    let expected: i32 = (0..depth).map(|k| w.get(r, k) as i32).sum();
                    assert_eq!(p.row_depth_sums()[r], expected);
                }
                cases += 1;
            }
            let x = random_q4(&mut rng, depth, rows);
            let p = pack_rhs(&x);
            assert_eq!(unpack_rhs(&p), x.data(), "rhs depth={depth} cols={rows}");
            for c in 0..rows {
                let expected: i32 = (0..depth).map(|k| x.get(k, c) as i32).sum();
                assert_eq!(p.col_depth_sums()[c], expected);
            }
            cases += 1;
        }
    }
    println!("ACCEPTANCE 5 (packing round trips, {cases} shape cases): PASS");
}

/// Criterion 6: a quantized convolution stays within the analytic error
/// bound of its float counterpart:
/// `depth * (s_w * max|x| + s_x * max|w| + s_w * s_x)` per output element.
#[test]
fn criterion_6_conv_error_bound() {
    let mut rng = StdRng::seed_from_u64(0x06);
    let mut worst_ratio = 0.0f32;
    for case in 0..100 {
        let c = rng.random_range(1..=8);
        let kh = rng.random_range(1..=3);
        let kw = rng.random_range(1..=3);
        let h = rng.random_range(kh..=kh + 7);
        let w = rng.random_range(kw..=kw + 7);
        let sh = rng.random_range(1..=2);
        let sw = rng.random_range(1..=2);
        let filters = rng.random_range(1..=32);
        let activation = if case % 3 == 0 { Activation::Relu } else { Activation::None };
        let wmag = 10f32.powf(rng.random_range(-1.0f32..1.0));
        let xmag = 10f32.powf(rng.random_range(-1.0f32..1.0));
        let weights: Vec<f32> =
            (0..filters * c * kh * kw).map(|_| rng.random_range(-wmag..wmag)).collect();
        let input = Tensor::new(
            c,
            h,
            w,
            (0..c * h * w).map(|_| rng.random_range(-xmag..xmag)).collect(),
        )
        .unwrap();

        let qlayer = LayerSpec::qconv(filters, (kh, kw), (sh, sw), activation, weights.clone());
        let flayer = LayerSpec::fconv(filters, (kh, kw), (sh, sw), activation, weights.clone());
        let q = quantized_conv_forward(&qlayer, ConvInput::Float(&input), 4, AccumulatorMode::Signed16)
            .unwrap();
        let f = float_conv_forward(&flayer, &input).unwrap();

        let depth = (c * kh * kw) as f32;
        let s_w = compute_quant_params(&weights, 4).unwrap().scale;
        let s_x = compute_quant_params(&input.data, 4).unwrap().scale;
        let max_w = weights.iter().fold(0.0f32, |a, &v| a.max(v.abs()));
        let max_x = input.data.iter().fold(0.0f32, |a, &v| a.max(v.abs()));
        let bound = depth * (s_w * max_x + s_x * max_w + s_w * s_x);

        let dq = q.dequantize();
        for (i, (&a, &b)) in dq.data.iter().zip(&f.data).enumerate() {
            let err = (a - b).abs();
            assert!(
                err <= bound,
                "case {case} element {i}: error {err} exceeds bound {bound}"
            );
            worst_ratio = worst_ratio.max(err / bound);
        }
    }
    println!(
        "ACCEPTANCE 6 (conv error bound over 100 random layers, worst error/bound = {worst_ratio:.3}): PASS"
    );
}

fn ocr_architecture(rng: &mut StdRng) -> Vec<LayerSpec> {
    let mut weights = |n: usize| (0..n).map(|_| rng.random_range(-0.5f32..0.5)).collect::<Vec<f32>>();
    vec![
        LayerSpec::qconv(8, (5, 5), (1, 1), Activation::Relu, weights(8 * 1 * 25)),
        LayerSpec::qconv(8, (3, 3), (1, 1), Activation::Relu, weights(8 * 8 * 9)),
        LayerSpec::qconv(8, (3, 3), (2, 2), Activation::Relu, weights(8 * 8 * 9)),
        LayerSpec::qconv(16, (3, 3), (1, 1), Activation::Relu, weights(16 * 8 * 9)),
        LayerSpec::qconv(16, (3, 3), (2, 2), Activation::Relu, weights(16 * 16 * 9)),
        LayerSpec::qconv(24, (3, 3), (1, 1), Activation::Relu, weights(24 * 16 * 9)),
        LayerSpec::fc(36, Activation::Softmax, weights(36 * 24 * 1 * 3)),
    ]
}

/// Criterion 7, part 1: the bundled 7-layer OCR-style architecture (25x33
/// grayscale input, six 4-bit convolutions, 36-way float classifier head)
/// builds and runs at 4-bit/signed-16 with no overflow errors, and its
/// shape chain matches the derivation.
///
/// Part 2: on a toy classifier whose class margins exceed the propagated
/// criterion-6 bound, quantized and float networks agree on every argmax.
#[test]
fn criterion_7_network_level_behaviour() {
    // Part 1: the full architecture.
    let mut rng = StdRng::seed_from_u64(0x07);
    let layers = ocr_architecture(&mut rng);
    let net = Network::new((1, 25, 33), 4, AccumulatorMode::Signed16, layers).unwrap();
    assert_eq!(
        net.layer_shapes(),
        &[
            (8, 21, 29),
            (8, 19, 27),
            (8, 9, 13),
            (16, 7, 11),
            (16, 3, 5),
            (24, 1, 3),
            (36, 1, 1)
        ],
        "derived shape chain"
    );
    let input = Tensor::new(1, 25, 33, (0..25 * 33).map(|_| rng.random_range(0.0f32..1.0)).collect())
        .unwrap();
    let out = net.forward(&input).unwrap();
    assert_eq!(out.len(), 36);
    assert!(out.iter().all(|p| p.is_finite() && *p >= 0.0));
    let sum: f32 = out.iter().sum();
    assert!((sum - 1.0).abs() < 1e-5, "softmax output sums to {sum}");

    // Part 2: argmax agreement where the margin analysis guarantees it.
    // Four 2x2 filters: brightness, vertical edges, horizontal edges,
    // checkerboard. Each class output sums the relu'd responses of its own
    // filter, so a matching pattern scores 8 and the rest stay near 0.
    let conv_weights = vec![
        0.5, 0.5, 0.5, 0.5, //
        0.5, -0.5, 0.5, -0.5, //
        0.5, 0.5, -0.5, -0.5, //
        0.5, -0.5, -0.5, 0.5,
    ];
    let mut fc_weights = vec![0.0f32; 4 * 16];
    for class in 0..4 {
        for pos in 0..4 {
            fc_weights[class * 16 + class * 4 + pos] = 1.0;
        }
    }
    let layers = vec![
        LayerSpec::qconv(4, (2, 2), (2, 2), Activation::Relu, conv_weights.clone()),
        LayerSpec::fc(4, Activation::None, fc_weights.clone()),
    ];
    let qnet = Network::new((1, 4, 4), 4, AccumulatorMode::Signed16, layers).unwrap();
    let fnet = qnet.float_equivalent();

    let patterns: [fn(usize, usize) -> f32; 4] = [
        |_, _| 1.0,
        |_, x| if x % 2 == 0 { 1.0 } else { -1.0 },
        |y, _| if y % 2 == 0 { 1.0 } else { -1.0 },
        |y, x| if (y + x) % 2 == 0 { 1.0 } else { -1.0 },
    ];
    let mut checked = 0usize;
    for (class, pattern) in patterns.iter().enumerate() {
        for noisy in [false, true] {
            let mut data = Vec::with_capacity(16);
            for y in 0..4 {
                for x in 0..4 {
                    let noise = if noisy { rng.random_range(-0.1f32..0.1) } else { 0.0 };
                    data.push(pattern(y, x) + noise);
                }
            }
            let input = Tensor::new(1, 4, 4, data).unwrap();

            // The margin precondition, from the criterion-6 bound pushed
            // through the fully-connected layer's L1 row norms.
            let s_w = compute_quant_params(&conv_weights, 4).unwrap().scale;
            let s_x = compute_quant_params(&input.data, 4).unwrap().scale;
            let max_w = 0.5f32;
            let max_x = input.data.iter().fold(0.0f32, |a, &v| a.max(v.abs()));
            let conv_bound = 4.0 * (s_w * max_x + s_x * max_w + s_w * s_x);
            let logit_bound = 2.0 * 4.0 * conv_bound; // both logits off by <= 4 outputs each

            let f_out = fnet.forward(&input).unwrap();
            let mut order: Vec<usize> = (0..4).collect();
            order.sort_by(|&a, &b| f_out[b].partial_cmp(&f_out[a]).unwrap());
            let margin = f_out[order[0]] - f_out[order[1]];
            assert!(
                margin > logit_bound,
                "test construction broken: margin {margin} not above bound {logit_bound}"
            );
            assert_eq!(order[0], class, "float net misclassifies its own pattern");

            let q_out = qnet.forward(&input).unwrap();
            let q_top = (0..4).max_by(|&a, &b| q_out[a].partial_cmp(&q_out[b]).unwrap()).unwrap();
            assert_eq!(q_top, class, "quantized argmax diverged (outputs {q_out:?})");
            checked += 1;
        }
    }
    println!(
        "ACCEPTANCE 7 (full architecture runs at 4-bit/signed16; {checked}/{checked} toy argmax agreements): PASS"
    );
}

/// The invariant behind running ReLU on integer activations, checked at the
/// network level: a quantized layer's integer result has zero-point 0, so
/// clipping negatives commutes with dequantization.
#[test]
fn relu_on_integer_activations_is_sound() {
    let mut rng = StdRng::seed_from_u64(0xAE);
    let weights: Vec<f32> = (0..6 * 4).map(|_| rng.random_range(-1.0f32..1.0)).collect();
    let relu = LayerSpec::qconv(6, (2, 2), (1, 1), Activation::Relu, weights.clone());
    let plain = LayerSpec::qconv(6, (2, 2), (1, 1), Activation::None, weights);
    let input =
        Tensor::new(1, 5, 5, (0..25).map(|_| rng.random_range(-1.0f32..1.0)).collect()).unwrap();
    let a = quantized_conv_forward(&relu, ConvInput::Float(&input), 4, AccumulatorMode::Signed16).unwrap();
    let b = quantized_conv_forward(&plain, ConvInput::Float(&input), 4, AccumulatorMode::Signed16).unwrap();
    let mut clipped = b.dequantize();
    clipped.data.iter_mut().for_each(|v| *v = v.max(0.0));
    assert_eq!(a.dequantize().data, clipped.data);
    let _ = nn::softmax(&[0.0]);
}
