use pcgc_core::entropy::{gaussian_tables, range_decode, range_encode, read_stream, write_stream, scale_bin, CdfTable, FactorizedPrior};
use pcgc_core::nn::tensor::{Shape, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Inverse-CDF draw from a table's own quantized distribution.
fn sample(table: &CdfTable, rng: &mut ChaCha8Rng) -> i32 {
    let u = rng.gen_range(0..65536u32);
    let mut acc = 0u32;
    for i in 0..table.len() {
        acc += table.freq(i);
        if u < acc {
            return table.min_sym + i as i32;
        }
    }
    unreachable!("frequencies sum to 65536")
}

fn random_table(rng: &mut ChaCha8Rng) -> CdfTable {
    let n = rng.gen_range(1..40);
    let pmf: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0f64).powi(3) + 1e-9).collect();
    CdfTable::from_pmf(rng.gen_range(-20..20), &pmf).unwrap()
}

#[test]
fn million_decoded_samples_follow_the_table() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let table = &gaussian_tables()[scale_bin(3.0)];
    let symbols: Vec<i32> = (0..1_000_000).map(|_| sample(table, &mut rng)).collect();
    let tables = vec![table; symbols.len()];
    let bytes = range_encode(&symbols, &tables).unwrap();
    let decoded = range_decode(&bytes, &tables).unwrap();
    assert_eq!(decoded, symbols);

    let mut counts = vec![0u64; table.len()];
    for s in &decoded {
        counts[table.index_of(*s)] += 1;
    }
    // Pool bins until each expected count reaches 5.
    let n = decoded.len() as f64;
    let (mut chi2, mut bins, mut obs, mut exp) = (0.0, 0usize, 0.0, 0.0);
    for (i, &c) in counts.iter().enumerate() {
        obs += c as f64;
        exp += n * table.freq(i) as f64 / 65536.0;
        if exp >= 5.0 || i + 1 == counts.len() {
            chi2 += (obs - exp).powi(2) / exp;
            bins += 1;
            obs = 0.0;
            exp = 0.0;
        }
    }
    assert!(bins >= 5, "only {bins} pooled bins");
    let p = 1.0 - ChiSquared::new((bins - 1) as f64).unwrap().cdf(chi2);
    assert!(p > 1e-3, "chi-square {chi2:.2} on {} dof, p = {p:.2e}", bins - 1);
    // Coded size tracks the information content of the sample: the
    // carry-less coder's truncation costs well under 0.1% over a long run.
    let ideal: f64 = decoded.iter().map(|&s| -table.probability(s).log2()).sum::<f64>() / 8.0;
    let size = bytes.len() as f64;
    assert!(size >= ideal.floor() && size <= ideal * 1.001 + 2.0, "{size} bytes vs ideal {ideal:.1}");
}

#[test]
fn ten_thousand_fuzz_round_trips() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for case in 0..10_000 {
        let pool: Vec<CdfTable> = (0..rng.gen_range(1..4)).map(|_| random_table(&mut rng)).collect();
        let len = rng.gen_range(0..200);
        let tables: Vec<&CdfTable> = (0..len).map(|_| &pool[rng.gen_range(0..pool.len())]).collect();
        let symbols: Vec<i32> = tables
            .iter()
            .map(|t| if rng.gen_bool(0.8) { sample(t, &mut rng) } else { t.min_sym + rng.gen_range(0..t.len() as i32) })
            .collect();
        let bytes = range_encode(&symbols, &tables).unwrap();
        assert_eq!(range_decode(&bytes, &tables).unwrap(), symbols, "case {case}");
    }
}

#[test]
fn out_of_alphabet_symbols_are_rejected() {
    let t = CdfTable::from_pmf(0, &[0.5, 0.5]).unwrap();
    assert!(range_encode(&[2], &[&t]).is_err());
    assert!(range_encode(&[0, 1], &[&t, &t]).is_ok());
}

#[test]
fn framed_streams_detect_corruption() {
    let t = CdfTable::from_pmf(-2, &[0.1, 0.2, 0.4, 0.2, 0.1]).unwrap();
    let symbols = [0, 1, -2, 2, 0, 0, -1];
    let payload = range_encode(&symbols, &vec![&t; symbols.len()]).unwrap();
    let mut framed = Vec::new();
    write_stream(&payload, &mut framed);
    write_stream(&[], &mut framed);
    let (first, rest) = read_stream(&framed).unwrap();
    assert_eq!(first, payload.as_slice());
    let (second, rest) = read_stream(rest).unwrap();
    assert!(second.is_empty() && rest.is_empty());
    let mut bad = framed.clone();
    let last = 8 + payload.len() - 1;
    bad[last] ^= 0x40;
    assert!(read_stream(&bad).is_err());
    assert!(read_stream(&framed[..5]).is_err());
}

#[test]
fn factorized_tables_code_prior_samples_near_entropy() {
    let prior = FactorizedPrior::new(2, 3);
    let tables = prior.cdf_tables().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let n = 4000;
    let symbols: Vec<i32> = (0..n).map(|i| sample(&tables[i % 2], &mut rng)).collect();
    let refs: Vec<&CdfTable> = (0..n).map(|i| &tables[i % 2]).collect();
    let bytes = range_encode(&symbols, &refs).unwrap();
    assert_eq!(range_decode(&bytes, &refs).unwrap(), symbols);
    // The model's own likelihood agrees with the quantized table.
    let z = Tensor::from_vec(Shape::new(2, [1, 1, 1]), vec![0.0, 1.0]).unwrap();
    let lik = prior.likelihood(&z).unwrap();
    for c in 0..2 {
        let table_p = tables[c].probability(z[c] as i32);
        assert!((lik[c] - table_p).abs() < 1e-3, "channel {c}: {} vs {}", lik[c], table_p);
    }
}
