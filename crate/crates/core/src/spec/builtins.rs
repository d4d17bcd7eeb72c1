//! In-process reference functions used by tests and the desk benchmark suite.
//!
//! Integer arithmetic wraps at 64 bits. Loops over a size argument clamp at
//! the buffer length so a built-in never reads past its inputs.

use super::oracle::{BuiltinFn, BuiltinOracle};
use super::types::{Buffer, Value};
use super::parse_signature;

macro_rules! buf {
    ($args:expr, $i:expr, $variant:ident) => {
        match &$args[$i] {
            Value::Buffer(Buffer::$variant(v)) => v.clone(),
            _ => unreachable!("argument {} is not a {} buffer", $i, stringify!($variant)),
        }
    };
}

macro_rules! set_buf {
    ($args:expr, $i:expr, $variant:ident, $data:expr) => {
        $args[$i] = Value::Buffer(Buffer::$variant($data))
    };
}

fn int(args: &[Value], i: usize) -> i64 {
    args[i].as_int().expect("int argument")
}

fn float(args: &[Value], i: usize) -> f64 {
    args[i].as_float().expect("float argument")
}

fn bound(n: i64, len: usize) -> usize {
    n.clamp(0, len as i64) as usize
}

fn dot(args: &mut [Value]) -> Option<Value> {
    let (a, b) = (buf!(args, 0, Float), buf!(args, 1, Float));
    let n = bound(int(args, 2), a.len().min(b.len()));
    let mut g = 0.0;
    for i in 0..n {
        g += a[i] * b[i];
    }
    Some(Value::Float(g))
}

fn scale(args: &mut [Value]) -> Option<Value> {
    let inp = buf!(args, 0, Float);
    let mut out = buf!(args, 1, Float);
    let n = bound(int(args, 2), inp.len().min(out.len()));
    for i in 0..n {
        out[i] = inp[i] * 2.0;
    }
    set_buf!(args, 1, Float, out);
    None
}

fn sum(args: &mut [Value]) -> Option<Value> {
    let a = buf!(args, 0, Int);
    let n = bound(int(args, 1), a.len());
    Some(Value::Int(a[..n].iter().fold(0i64, |s, &x| s.wrapping_add(x))))
}

fn amax(args: &mut [Value]) -> Option<Value> {
    let a = buf!(args, 0, Int);
    let n = bound(int(args, 1), a.len());
    Some(Value::Int(a[..n].iter().fold(0i64, |m, &x| if x > m { x } else { m })))
}

fn iabs(args: &mut [Value]) -> Option<Value> {
    Some(Value::Int(int(args, 0).wrapping_abs()))
}

fn max2(args: &mut [Value]) -> Option<Value> {
    Some(Value::Int(int(args, 0).max(int(args, 1))))
}

fn triangle(args: &mut [Value]) -> Option<Value> {
    let n = int(args, 0);
    let mut t = 0i64;
    for i in 0..n.max(0) {
        t = t.wrapping_add(i + 1);
    }
    Some(Value::Int(t))
}

fn factorial(args: &mut [Value]) -> Option<Value> {
    let n = int(args, 0);
    let mut f = 1i64;
    for i in 0..n.max(0) {
        f = f.wrapping_mul(i + 1);
    }
    Some(Value::Int(f))
}

fn count_eq(args: &mut [Value]) -> Option<Value> {
    let a = buf!(args, 0, Int);
    let n = bound(int(args, 1), a.len());
    let x = int(args, 2);
    Some(Value::Int(a[..n].iter().filter(|&&v| v == x).count() as i64))
}

fn vadd(args: &mut [Value]) -> Option<Value> {
    let (a, b) = (buf!(args, 0, Int), buf!(args, 1, Int));
    let mut out = buf!(args, 2, Int);
    let n = bound(int(args, 3), a.len().min(b.len()).min(out.len()));
    for i in 0..n {
        out[i] = a[i].wrapping_add(b[i]);
    }
    set_buf!(args, 2, Int, out);
    None
}

fn last(args: &mut [Value]) -> Option<Value> {
    let a = buf!(args, 0, Int);
    let n = bound(int(args, 1), a.len());
    Some(Value::Int(if n == 0 { 0 } else { a[n - 1] }))
}

fn incr(args: &mut [Value]) -> Option<Value> {
    let mut a = buf!(args, 0, Int);
    let n = bound(int(args, 1), a.len());
    for x in &mut a[..n] {
        *x = x.wrapping_add(1);
    }
    set_buf!(args, 0, Int, a);
    None
}

fn strlen(args: &mut [Value]) -> Option<Value> {
    let s = buf!(args, 0, Char);
    Some(Value::Int(s.iter().position(|&c| c == 0).unwrap_or(s.len()) as i64))
}

fn strcpy(args: &mut [Value]) -> Option<Value> {
    let mut dst = buf!(args, 0, Char);
    let src = buf!(args, 1, Char);
    for i in 0..src.len().min(dst.len()) {
        if src[i] == 0 {
            break;
        }
        dst[i] = src[i];
    }
    set_buf!(args, 0, Char, dst);
    None
}

fn countc(args: &mut [Value]) -> Option<Value> {
    let s = buf!(args, 0, Char);
    let c = int(args, 1);
    let n = s.iter().take_while(|&&x| x != 0).filter(|&&x| x as i64 == c).count();
    Some(Value::Int(n as i64))
}

fn vsub(args: &mut [Value]) -> Option<Value> {
    let (a, b) = (buf!(args, 0, Float), buf!(args, 1, Float));
    let mut out = buf!(args, 2, Float);
    let n = bound(int(args, 3), a.len().min(b.len()).min(out.len()));
    for i in 0..n {
        out[i] = a[i] - b[i];
    }
    set_buf!(args, 2, Float, out);
    None
}

fn saxpy(args: &mut [Value]) -> Option<Value> {
    let alpha = float(args, 0);
    let x = buf!(args, 1, Float);
    let mut y = buf!(args, 2, Float);
    let n = bound(int(args, 3), x.len().min(y.len()));
    for i in 0..n {
        y[i] = alpha * x[i] + y[i];
    }
    set_buf!(args, 2, Float, y);
    None
}

fn matvec(args: &mut [Value]) -> Option<Value> {
    let m = buf!(args, 0, Float);
    let x = buf!(args, 1, Float);
    let mut y = buf!(args, 2, Float);
    let mut n = int(args, 3).max(0) as usize;
    while n * n > m.len() || n > x.len() || n > y.len() {
        n -= 1;
    }
    for i in 0..n {
        let mut acc = 0.0;
        for j in 0..n {
            acc += m[i * n + j] * x[j];
        }
        y[i] = acc;
    }
    set_buf!(args, 2, Float, y);
    None
}

fn fir(args: &mut [Value]) -> Option<Value> {
    let x = buf!(args, 0, Float);
    let mut y = buf!(args, 1, Float);
    let n = bound(int(args, 2), x.len().saturating_sub(1).min(y.len()));
    for i in 0..n {
        y[i] = x[i] + x[i + 1];
    }
    set_buf!(args, 1, Float, y);
    None
}

fn energy(args: &mut [Value]) -> Option<Value> {
    let x = buf!(args, 0, Float);
    let n = bound(int(args, 1), x.len());
    let mut e = 0.0;
    for &v in &x[..n] {
        e += v * v;
    }
    Some(Value::Float(e))
}

fn identity(args: &mut [Value]) -> Option<Value> {
    Some(Value::Int(int(args, 0)))
}

const TABLE: &[(&str, &str, BuiltinFn)] = &[
    ("dot", "float dot(float *a, float *b, int c)", dot),
    ("scale", "void scale(float *in, float *out, int n)", scale),
    ("sum", "int sum(int *a, int n)", sum),
    ("max", "int amax(int *a, int n)", amax),
    ("abs", "int iabs(int x)", iabs),
    ("max2", "int max2(int a, int b)", max2),
    ("triangle", "int tri(int n)", triangle),
    ("factorial", "int fact(int n)", factorial),
    ("count-eq", "int count(int *a, int n, int x)", count_eq),
    ("vadd", "void vadd(int *a, int *b, int *out, int n)", vadd),
    ("last", "int last(int *a, int n)", last),
    ("incr", "void incr(int *a, int n)", incr),
    ("strlen", "int slen(char *s)", strlen),
    ("strcpy", "void scopy(char *dst, char *src)", strcpy),
    ("countc", "int countc(char *s, char c)", countc),
    ("vsub", "void vsub(float *a, float *b, float *out, int n)", vsub),
    ("saxpy", "void saxpy(float alpha, float *x, float *y, int n)", saxpy),
    ("matvec", "void matvec(float *m, float *x, float *y, int n)", matvec),
    ("fir", "void fir(float *x, float *y, int n)", fir),
    ("energy", "float energy(float *x, int n)", energy),
    ("identity", "int ident(int x)", identity),
];

pub(crate) fn lookup(name: &str) -> Option<BuiltinOracle> {
    TABLE.iter().find(|(n, _, _)| *n == name).map(|(n, sig, f)| {
        BuiltinOracle::new(
            format!("builtin:{n}"),
            parse_signature(sig).expect("builtin signatures parse"),
            *f,
        )
    })
}

/// Ids of every registered built-in, prefixed with `builtin:`.
pub fn builtin_ids() -> Vec<String> {
    TABLE.iter().map(|(n, _, _)| format!("builtin:{n}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spec::oracle::Oracle;

    #[test]
    fn every_builtin_signature_parses() {
        for id in builtin_ids() {
            assert!(lookup(id.trim_start_matches("builtin:")).is_some(), "{id}");
        }
    }

    #[test]
    fn dot_matches_worked_example() {
        let mut o = lookup("dot").unwrap();
        let obs = o
            .evaluate(&[
                Value::Buffer(Buffer::Float(vec![0.0, 1.2, -3.4, -5.6])),
                Value::Buffer(Buffer::Float(vec![-1.0, 1.2, 2.4, 3.2])),
                Value::Int(3),
            ])
            .unwrap();
        match obs.returned {
            Some(Value::Float(x)) => assert!((x - -6.72).abs() < 1e-9, "{x}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn scale_writes_output_buffer() {
        let mut o = lookup("scale").unwrap();
        let obs = o
            .evaluate(&[
                Value::Buffer(Buffer::Float(vec![1.0, 2.0])),
                Value::Buffer(Buffer::Float(vec![0.0, 0.0])),
                Value::Int(2),
            ])
            .unwrap();
        assert_eq!(obs.returned, None);
        assert_eq!(obs.out_buffers[1], Buffer::Float(vec![2.0, 4.0]));
        assert_eq!(obs.out_buffers[0], Buffer::Float(vec![1.0, 2.0]));
    }

    #[test]
    fn string_builtins_stop_at_terminator() {
        let s = Value::Buffer(Buffer::Char(b"ab\0c".to_vec()));
        assert_eq!(strlen(&mut [s.clone()]), Some(Value::Int(2)));
        let mut args = [Value::Buffer(Buffer::Char(b"xxxx".to_vec())), s];
        strcpy(&mut args);
        assert_eq!(args[0], Value::Buffer(Buffer::Char(b"abxx".to_vec())));
    }

    #[test]
    fn matvec_small() {
        let mut args = [
            Value::Buffer(Buffer::Float(vec![1.0, 2.0, 3.0, 4.0])),
            Value::Buffer(Buffer::Float(vec![1.0, 1.0, 0.0, 0.0])),
            Value::Buffer(Buffer::Float(vec![9.0; 4])),
            Value::Int(2),
        ];
        matvec(&mut args);
        assert_eq!(args[2], Value::Buffer(Buffer::Float(vec![3.0, 7.0, 9.0, 9.0])));
    }
}
