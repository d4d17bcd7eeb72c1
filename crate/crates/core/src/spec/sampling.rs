use rand::Rng;
use serde::{Deserialize, Serialize};

use super::types::{Buffer, ParamType, ScalarKind, Signature, Value};

/// How an int parameter that sizes the buffers is drawn.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SizeRelation {
    /// `0 <= n <= len`
    Len,
    /// `0 <= n <= len - 1`
    LenMinusOne,
    /// `1 <= n <= len`
    NonEmpty,
    /// `0 <= n` and `n * n <= len`
    Sqrt,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SizeParam {
    pub name: String,
    pub relation: SizeRelation,
}

/// Intervals and counts used to draw example inputs.
///
/// All buffers of one example share a single length drawn from
/// `buffer_len`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplingConfig {
    pub int_range: (i64, i64),
    pub float_range: (f64, f64),
    pub char_range: (u8, u8),
    pub buffer_len: (usize, usize),
    pub example_count: usize,
    pub seed: u64,
    /// Plant a zero terminator in every char buffer.
    pub string_mode: bool,
    pub size_params: Vec<SizeParam>,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig {
            int_range: (-16, 16),
            float_range: (-8.0, 8.0),
            char_range: (32, 126),
            buffer_len: (2, 8),
            example_count: 32,
            seed: 0,
            string_mode: false,
            size_params: Vec::new(),
        }
    }
}

impl SamplingConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_examples(mut self, n: usize) -> Self {
        self.example_count = n;
        self
    }

    pub(crate) fn is_valid(&self) -> bool {
        self.int_range.0 <= self.int_range.1
            && self.float_range.0 <= self.float_range.1
            && self.char_range.0 <= self.char_range.1
            && self.buffer_len.0 >= 1
            && self.buffer_len.0 <= self.buffer_len.1
    }

    fn size_relation(&self, name: &str) -> Option<SizeRelation> {
        self.size_params
            .iter()
            .find(|s| s.name == name)
            .map(|s| s.relation)
    }
}

fn sample_scalar<R: Rng + ?Sized>(kind: ScalarKind, rng: &mut R, cfg: &SamplingConfig) -> Value {
    match kind {
        ScalarKind::Char => Value::Char(rng.gen_range(cfg.char_range.0..=cfg.char_range.1)),
        ScalarKind::Int => Value::Int(rng.gen_range(cfg.int_range.0..=cfg.int_range.1)),
        ScalarKind::Float => {
            let (lo, hi) = cfg.float_range;
            if lo == hi {
                Value::Float(lo)
            } else {
                Value::Float(rng.gen_range(lo..=hi))
            }
        }
    }
}

fn sample_buffer<R: Rng + ?Sized>(
    kind: ScalarKind,
    len: usize,
    rng: &mut R,
    cfg: &SamplingConfig,
) -> Buffer {
    match kind {
        ScalarKind::Char => {
            let mut data: Vec<u8> = (0..len)
                .map(|_| rng.gen_range(cfg.char_range.0..=cfg.char_range.1))
                .collect();
            if cfg.string_mode {
                let at = rng.gen_range(0..len);
                data[at] = 0;
            }
            Buffer::Char(data)
        }
        ScalarKind::Int => Buffer::Int(
            (0..len)
                .map(|_| rng.gen_range(cfg.int_range.0..=cfg.int_range.1))
                .collect(),
        ),
        ScalarKind::Float => Buffer::Float(
            (0..len)
                .map(|_| match sample_scalar(ScalarKind::Float, rng, cfg) {
                    Value::Float(x) => x,
                    _ => unreachable!(),
                })
                .collect(),
        ),
    }
}

fn isqrt(n: usize) -> usize {
    let mut r = (n as f64).sqrt() as usize;
    while r * r > n {
        r -= 1;
    }
    while (r + 1) * (r + 1) <= n {
        r += 1;
    }
    r
}

/// Draws one argument per parameter of `sig`.
pub fn sample_inputs<R: Rng + ?Sized>(sig: &Signature, rng: &mut R, cfg: &SamplingConfig) -> Vec<Value> {
    let len = rng.gen_range(cfg.buffer_len.0..=cfg.buffer_len.1);
    sig.params()
        .iter()
        .map(|p| match p.ty {
            ParamType::Int if cfg.size_relation(&p.name).is_some() => {
                let (lo, hi) = match cfg.size_relation(&p.name).unwrap() {
                    SizeRelation::Len => (0, len),
                    SizeRelation::LenMinusOne => (0, len.saturating_sub(1)),
                    SizeRelation::NonEmpty => (1.min(len), len),
                    SizeRelation::Sqrt => (0, isqrt(len)),
                };
                Value::Int(rng.gen_range(lo as i64..=hi as i64))
            }
            t => match (t.scalar(), t.pointee()) {
                (Some(s), _) => sample_scalar(s, rng, cfg),
                (_, Some(e)) => Value::Buffer(sample_buffer(e, len, rng, cfg)),
                _ => unreachable!(),
            },
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spec::parse_signature;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn dot_sig() -> Signature {
        parse_signature("float f(float *a, float *b, int c)").unwrap()
    }

    #[test]
    fn deterministic_per_seed() {
        let cfg = SamplingConfig::default();
        let a = sample_inputs(&dot_sig(), &mut ChaCha8Rng::seed_from_u64(7), &cfg);
        let b = sample_inputs(&dot_sig(), &mut ChaCha8Rng::seed_from_u64(7), &cfg);
        assert_eq!(a, b);
        assert_eq!(a.len(), 3);
        let (la, lb) = (a[0].as_buffer().unwrap().len(), a[1].as_buffer().unwrap().len());
        assert_eq!(la, lb);
        assert!(matches!(a[2], Value::Int(_)));
    }

    #[test]
    fn degenerate_intervals_give_zero() {
        let cfg = SamplingConfig {
            int_range: (0, 0),
            float_range: (0.0, 0.0),
            char_range: (0, 0),
            ..Default::default()
        };
        let sig = parse_signature("float f(float *a, int n, char c, float x)").unwrap();
        let v = sample_inputs(&sig, &mut ChaCha8Rng::seed_from_u64(1), &cfg);
        assert_eq!(v[1], Value::Int(0));
        assert_eq!(v[2], Value::Char(0));
        assert_eq!(v[3], Value::Float(0.0));
        match &v[0] {
            Value::Buffer(Buffer::Float(d)) => assert!(d.iter().all(|&x| x == 0.0)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn size_params_follow_buffer_length() {
        let cfg = SamplingConfig {
            size_params: vec![SizeParam { name: "c".into(), relation: SizeRelation::Len }],
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let v = sample_inputs(&dot_sig(), &mut rng, &cfg);
            let len = v[0].as_buffer().unwrap().len() as i64;
            let c = v[2].as_int().unwrap();
            assert!((0..=len).contains(&c));
        }
    }

    proptest! {
        #[test]
        fn samples_stay_in_configured_ranges(seed in any::<u64>(), lo in -20i64..0, span in 0i64..20, blo in 1usize..5, bspan in 0usize..5) {
            let cfg = SamplingConfig {
                int_range: (lo, lo + span),
                float_range: (lo as f64, (lo + span) as f64),
                buffer_len: (blo, blo + bspan),
                ..Default::default()
            };
            let sig = parse_signature("int f(int *a, float *b, int n, float x, char c)").unwrap();
            let v = sample_inputs(&sig, &mut ChaCha8Rng::seed_from_u64(seed), &cfg);
            for val in &v {
                match val {
                    Value::Int(x) => prop_assert!((lo..=lo + span).contains(x)),
                    Value::Float(x) => prop_assert!(*x >= lo as f64 && *x <= (lo + span) as f64),
                    Value::Char(c) => prop_assert!((32..=126).contains(c)),
                    Value::Buffer(b) => {
                        prop_assert!(b.len() >= blo && b.len() <= blo + bspan);
                        for i in 0..b.len() {
                            match b.get(i).unwrap() {
                                Value::Int(x) => prop_assert!((lo..=lo + span).contains(&x)),
                                Value::Float(x) => prop_assert!(x >= lo as f64 && x <= (lo + span) as f64),
                                _ => {}
                            }
                        }
                    }
                }
            }
        }

        #[test]
        fn string_mode_plants_terminator(seed in any::<u64>()) {
            let cfg = SamplingConfig { string_mode: true, ..Default::default() };
            let sig = parse_signature("int slen(char *s)").unwrap();
            let v = sample_inputs(&sig, &mut ChaCha8Rng::seed_from_u64(seed), &cfg);
            match &v[0] {
                Value::Buffer(Buffer::Char(d)) => prop_assert!(d.contains(&0)),
                other => prop_assert!(false, "{:?}", other),
            }
        }
    }
}
