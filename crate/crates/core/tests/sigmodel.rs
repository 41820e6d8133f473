mod common;

use peakunroll::sigmodel::{
    degrade, generate_dataset, generate_spike_train, generate_split, read_records, sample_kernel, write_records,
    DatasetSpec, KernelSpec, RecordGenerator, Split, PRESET_NAMES,
};
use peakunroll::Error;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Fraser-Suzuki shape written out from its formula.
fn fs(x: f64, sigma: f64, a: f64) -> f64 {
    if a == 0.0 {
        return (-x * x / (2.0 * sigma * sigma)).exp();
    }
    let arg = 1.0 + a * x / sigma;
    if arg <= 0.0 {
        return 0.0;
    }
    (-(arg.ln().powi(2)) / (2.0 * a * a)).exp()
}

#[test]
fn kernel_taps_follow_the_formula() {
    for (sigma, a) in [(0.5, 0.2), (0.5, 0.6), (1.0, 0.0), (2.0, 0.4), (0.8, 1.5)] {
        let k = sample_kernel(&KernelSpec::new(sigma, a)).unwrap();
        for (x, t) in k.offsets().zip(&k.taps) {
            assert!((t - fs(x as f64, sigma, a)).abs() < 1e-15, "σ={sigma} a={a} x={x}");
        }
        assert_eq!(k.taps.iter().cloned().fold(0.0, f64::max), 1.0);
        assert!(k.taps.iter().all(|&t| t >= 0.0));
        if a > 0.0 {
            let bound = -sigma / a;
            for (x, t) in k.offsets().zip(&k.taps) {
                if (x as f64) <= bound {
                    assert_eq!(*t, 0.0);
                }
            }
        }
    }
    // a = 0.6: left cutoff at −0.8333
    let k = sample_kernel(&KernelSpec::new(0.5, 0.6)).unwrap();
    assert_eq!(k.offset, -1);
    assert_eq!(k.taps[0], 0.0);
    assert!(k.taps[1] > 0.0);
}

#[test]
fn gaussian_limit_is_continuous() {
    for sigma in [0.5, 1.0, 2.5] {
        let g = sample_kernel(&KernelSpec::new(sigma, 0.0)).unwrap();
        let e = sample_kernel(&KernelSpec::new(sigma, 1e-12)).unwrap();
        assert_eq!(g.offset, e.offset);
        for (a, b) in g.taps.iter().zip(&e.taps) {
            assert!((a - b).abs() < 1e-6);
        }
    }
}

#[test]
fn records_match_brute_force_convolution() {
    for preset in PRESET_NAMES {
        let mut spec = DatasetSpec::preset(preset).unwrap();
        spec.seed = 3;
        let gen = RecordGenerator::new(&spec).unwrap();
        let k = sample_kernel(&spec.kernel_spec()).unwrap();
        for index in 0..4 {
            let rec = gen.record(Split::Test, index).unwrap();
            assert_eq!(rec.peaks.len(), spec.spike_count());
            assert_eq!(rec.s.iter().filter(|&&v| v != 0.0).count(), spec.spike_count());
            for w in rec.peaks.windows(2) {
                assert!(w[1].position - w[0].position >= spec.d_min, "{preset}");
            }
            let mut p = vec![0.0; spec.n];
            for pk in &rec.peaks {
                assert!(pk.amplitude >= 0.0);
                for (j, &t) in k.taps.iter().enumerate() {
                    let i = pk.position as isize + k.offset + j as isize;
                    if (0..spec.n as isize).contains(&i) {
                        p[i as usize] += pk.amplitude * t;
                    }
                }
            }
            for (a, b) in p.iter().zip(&rec.p) {
                assert!((a - b).abs() <= 1e-12 * a.abs().max(1e-300), "{preset}: {a} vs {b}");
            }
        }
    }
}

#[test]
fn placement_is_reproducible_and_bounded() {
    let draw = || {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        generate_spike_train(2000, 30, 5, &mut rng).unwrap()
    };
    let (s1, p1) = draw();
    let (s2, p2) = draw();
    assert_eq!(p1.len(), 30);
    assert_eq!(s1, s2);
    assert_eq!(p1, p2);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    assert!(matches!(generate_spike_train(10, 3, 5, &mut rng), Err(Error::InvalidSpec(_))));
}

#[test]
fn noise_statistics() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let p: Vec<f64> = (0..2000).map(|i| ((i % 37) as f64 / 37.0).powi(3)).collect();
    let clean = degrade(&p, 1.0, 0.0, &mut rng).unwrap();
    let z = degrade(&p, 1.0, 0.02, &mut rng).unwrap();
    let e: Vec<f64> = z.iter().zip(&clean).map(|(a, b)| a - b).collect();
    let mean = e.iter().sum::<f64>() / e.len() as f64;
    let std = (e.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / e.len() as f64).sqrt();
    assert!((std - 0.02).abs() < 0.002, "std {std}");
}

#[test]
fn generation_is_thread_count_independent() {
    let spec = common::small_spec(300, 17);
    let gen = RecordGenerator::new(&spec).unwrap();
    let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
    let a = one.install(|| generate_split(&gen, Split::Train, 40)).unwrap();
    let b = four.install(|| generate_split(&gen, Split::Train, 40)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn dataset_files_are_reproducible_and_round_trip() {
    let spec = common::small_spec(128, 5);
    let d1 = tempfile::tempdir().unwrap();
    let d2 = tempfile::tempdir().unwrap();
    let m1 = generate_dataset(&spec, "tiny", d1.path()).unwrap();
    let m2 = generate_dataset(&spec, "tiny", d2.path()).unwrap();
    assert_eq!(m1, m2);
    for f in ["manifest.json", "train.bin", "val.bin", "test.bin"] {
        assert_eq!(std::fs::read(d1.path().join(f)).unwrap(), std::fs::read(d2.path().join(f)).unwrap());
    }
    let ds = peakunroll::sigmodel::load_dataset(d1.path()).unwrap();
    assert_eq!(ds.spec(), &spec);
    let test = ds.load_split(Split::Test).unwrap();
    let gen = RecordGenerator::new(&spec).unwrap();
    assert_eq!(test[2], gen.record(Split::Test, 2).unwrap());

    // tampering is caught by the checksum
    let path = d1.path().join("val.bin");
    let mut bytes = std::fs::read(&path).unwrap();
    let last = bytes.len() - 1;
    bytes[last] ^= 1;
    std::fs::write(&path, bytes).unwrap();
    assert!(matches!(ds.load_split(Split::Val), Err(Error::Format { .. })));
}

#[test]
fn binary_layout() {
    let spec = common::small_spec(32, 1);
    let gen = RecordGenerator::new(&spec).unwrap();
    let recs: Vec<_> = (0..2).map(|i| gen.record(Split::Train, i).unwrap()).collect();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.bin");
    write_records(&path, &recs).unwrap();
    let b = std::fs::read(&path).unwrap();
    assert_eq!(&b[..4], b"PKF1");
    assert_eq!(u64::from_le_bytes(b[4..12].try_into().unwrap()), 2);
    assert_eq!(u32::from_le_bytes(b[12..16].try_into().unwrap()), 32);
    let p = u32::from_le_bytes(b[16..20].try_into().unwrap()) as usize;
    assert_eq!(p, recs[0].peaks.len());
    let f = |off: usize| f64::from_le_bytes(b[off..off + 8].try_into().unwrap());
    assert_eq!(f(20), recs[0].s[0]);
    assert_eq!(f(20 + 8 * 32), recs[0].p[0]);
    assert_eq!(f(20 + 16 * 32), recs[0].z[0]);
    let peaks_at = 20 + 24 * 32;
    assert_eq!(u32::from_le_bytes(b[peaks_at..peaks_at + 4].try_into().unwrap()) as usize, recs[0].peaks[0].position);
    assert_eq!(f(peaks_at + 4), recs[0].peaks[0].amplitude);
    assert_eq!(b.len(), 12 + 2 * (8 + 24 * 32 + 12 * p));
    assert_eq!(read_records(&path).unwrap(), recs);
}

#[test]
fn presets_match_the_benchmark_table() {
    let rows = [
        ("D0", 0.015, 5, 0.5, 0.2, 0.02),
        ("D1", 0.03, 3, 0.5, 0.2, 0.02),
        ("D2", 0.045, 1, 0.5, 0.2, 0.02),
        ("D3", 0.015, 5, 0.5, 0.4, 0.02),
        ("D4", 0.015, 5, 0.5, 0.6, 0.02),
        ("D5", 0.03, 3, 0.5, 0.2, 0.04),
        ("D6", 0.03, 3, 0.5, 0.2, 0.06),
    ];
    for (name, pn, d, sf, a, se) in rows {
        let s = DatasetSpec::preset(name).unwrap();
        assert_eq!((s.p_over_n, s.d_min, s.sigma_f, s.a, s.sigma_e), (pn, d, sf, a, se), "{name}");
    }
    assert!(DatasetSpec::preset("D9").is_none());
}
