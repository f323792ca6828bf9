use proptest::prelude::*;

use mlreact::corpus::{Features, LabelSet};
use mlreact::evaluation::{make_folds_with, paired_t_test, FoldMode};
use mlreact::synthetic;
use mlreact::textprep::{self, PipelineConfig};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn folds_partition_the_corpus(n in 10usize..120, f in 2usize..8, seed in any::<u64>(), stratified in any::<bool>()) {
        prop_assume!(f <= n);
        let ds = synthetic::noisy_dataset(n, 3, 4, 0.1, seed);
        let mode = if stratified { FoldMode::Stratified } else { FoldMode::Random };
        let plan = make_folds_with(&ds, f, seed, mode).unwrap();
        let mut seen = vec![0usize; n];
        for k in 0..f {
            let test = plan.test_indices(k);
            let train = plan.train_indices(k);
            prop_assert_eq!(test.len() + train.len(), n);
            for i in test {
                seen[i] += 1;
            }
        }
        prop_assert!(seen.iter().all(|&c| c == 1));
        let sizes = plan.sizes();
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
    }

    #[test]
    fn tfidf_rows_are_unit_or_empty(seed in any::<u64>(), n in 5usize..40) {
        let text = synthetic::separable_corpus_sized(n, seed);
        let (_, ds) = textprep::vectorize_tfidf(&text, &PipelineConfig::default(), 1).unwrap();
        for inst in ds.instances() {
            let Features::Sparse(v) = &inst.features else { panic!("expected sparse rows") };
            prop_assert!(v.is_empty() || (v.sq_norm() - 1.0).abs() < 1e-12);
            prop_assert!(v.values().iter().all(|&x| x >= 0.0));
        }
    }

    #[test]
    fn t_statistic_is_antisymmetric(a in prop::collection::vec(0.0f64..1.0, 3..10), shift in prop::collection::vec(-0.2f64..0.2, 10)) {
        let b: Vec<f64> = a.iter().zip(&shift).map(|(x, d)| x + d).collect();
        let ab = paired_t_test(&a, &b, 0.95).unwrap();
        let ba = paired_t_test(&b, &a, 0.95).unwrap();
        prop_assert_eq!(ab.df, a.len() - 1);
        prop_assert_eq!(ab.reject, ba.reject);
        if ab.t.is_finite() {
            prop_assert!((ab.t + ba.t).abs() <= 1e-9 * ab.t.abs().max(1.0));
        }
    }

    #[test]
    fn label_set_algebra(bits in any::<u64>(), other in any::<u64>(), width in 1usize..=64) {
        let a = LabelSet::from_bits(bits, width);
        let b = LabelSet::from_bits(other, width);
        prop_assert_eq!(a.hamming(&a.complement()), width);
        prop_assert_eq!(a.complement().complement(), a);
        prop_assert_eq!(a.hamming(&b), b.hamming(&a));
        prop_assert_eq!(a.len() + a.complement().len(), width);
        prop_assert_eq!(LabelSet::from_flags(&a.to_flags()), a);
    }
}
