use eben::wav::to_pcm16;
use eben::weights_file::{decode_weights, encode_weights};
use eben::{read_wav, write_wav, Encoding};
use eben_core::{AudioBuffer, WeightStore};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn float32_round_trip_is_bit_exact(
        v in prop::collection::vec(-1.0f32..=1.0, 1..400),
        rate in 1u32..96_000,
    ) {
        let d = tempfile::tempdir().unwrap();
        let p = d.path().join("f.wav");
        let buf = AudioBuffer::new(v.iter().map(|&x| x as f64).collect(), rate).unwrap();
        prop_assert_eq!(write_wav(&p, &buf, Encoding::Float32).unwrap(), 0);
        let back = read_wav(&p).unwrap();
        prop_assert_eq!(back.sample_rate_hz(), rate);
        prop_assert!(back.samples().iter().zip(buf.samples()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn pcm16_error_within_one_step(v in prop::collection::vec(-1.0f64..1.0, 1..400)) {
        let d = tempfile::tempdir().unwrap();
        let p = d.path().join("i.wav");
        let buf = AudioBuffer::new(v, 16000).unwrap();
        write_wav(&p, &buf, Encoding::Pcm16).unwrap();
        let back = read_wav(&p).unwrap();
        prop_assert_eq!(back.len(), buf.len());
        for (a, b) in back.samples().iter().zip(buf.samples()) {
            prop_assert!((a - b).abs() <= 1.0 / 32768.0);
        }
    }

    #[test]
    fn pcm16_clamps_and_counts(v in prop::collection::vec(-3.0f64..3.0, 1..200)) {
        let d = tempfile::tempdir().unwrap();
        let p = d.path().join("c.wav");
        let buf = AudioBuffer::new(v.clone(), 16000).unwrap();
        let clips = write_wav(&p, &buf, Encoding::Pcm16).unwrap();
        prop_assert_eq!(clips, v.iter().filter(|x| x.abs() > 1.0).count());
        for &x in &v {
            let q = to_pcm16(x) as f64;
            prop_assert!((-32768.0..=32767.0).contains(&q));
        }
    }

    #[test]
    fn weights_round_trip(
        tensors in prop::collection::btree_map(
            "[a-z]{1,8}(\\.[a-z0-9]{1,4}){0,2}",
            prop::collection::vec(1usize..5, 0..3),
            0..8,
        ),
        seed in any::<u32>(),
    ) {
        let mut store = WeightStore::new();
        let mut x = seed as f32;
        for (name, shape) in tensors {
            let n: usize = shape.iter().product();
            let data = (0..n).map(|_| { x = (x * 1.618 + 0.3) % 7.0 - 3.0; x }).collect();
            store.insert(name, shape, data).unwrap();
        }
        let bytes = encode_weights(&store);
        prop_assert_eq!(decode_weights(&bytes).unwrap(), store.clone());
        if store.param_count() > 0 {
            prop_assert!(decode_weights(&bytes[..bytes.len() - 4]).is_err());
        }
    }
}
