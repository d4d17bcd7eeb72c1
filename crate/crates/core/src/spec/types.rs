use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::SpecError;

/// Element kind of a scalar or of a buffer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScalarKind {
    Char,
    Int,
    Float,
}

impl ScalarKind {
    pub fn name(self) -> &'static str {
        match self {
            ScalarKind::Char => "char",
            ScalarKind::Int => "int",
            ScalarKind::Float => "float",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReturnType {
    Char,
    Int,
    Float,
    Void,
}

impl ReturnType {
    pub fn scalar(self) -> Option<ScalarKind> {
        match self {
            ReturnType::Char => Some(ScalarKind::Char),
            ReturnType::Int => Some(ScalarKind::Int),
            ReturnType::Float => Some(ScalarKind::Float),
            ReturnType::Void => None,
        }
    }

    pub const ALL: [ReturnType; 4] = [
        ReturnType::Char,
        ReturnType::Int,
        ReturnType::Float,
        ReturnType::Void,
    ];
}

impl fmt::Display for ReturnType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.scalar() {
            Some(s) => f.write_str(s.name()),
            None => f.write_str("void"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ParamType {
    Char,
    Int,
    Float,
    PtrChar,
    PtrInt,
    PtrFloat,
    PtrOpaque,
}

impl ParamType {
    pub const ALL: [ParamType; 7] = [
        ParamType::Char,
        ParamType::Int,
        ParamType::Float,
        ParamType::PtrChar,
        ParamType::PtrInt,
        ParamType::PtrFloat,
        ParamType::PtrOpaque,
    ];

    pub fn is_pointer(self) -> bool {
        self.pointee().is_some()
    }

    /// Element kind behind a pointer. Opaque pointers are treated as char
    /// buffers.
    pub fn pointee(self) -> Option<ScalarKind> {
        match self {
            ParamType::PtrChar | ParamType::PtrOpaque => Some(ScalarKind::Char),
            ParamType::PtrInt => Some(ScalarKind::Int),
            ParamType::PtrFloat => Some(ScalarKind::Float),
            _ => None,
        }
    }

    pub fn scalar(self) -> Option<ScalarKind> {
        match self {
            ParamType::Char => Some(ScalarKind::Char),
            ParamType::Int => Some(ScalarKind::Int),
            ParamType::Float => Some(ScalarKind::Float),
            _ => None,
        }
    }

    /// Short name used in fragment keys and feature dumps.
    pub fn short(self) -> &'static str {
        match self {
            ParamType::Char => "char",
            ParamType::Int => "int",
            ParamType::Float => "float",
            ParamType::PtrChar => "ptr-char",
            ParamType::PtrInt => "ptr-int",
            ParamType::PtrFloat => "ptr-float",
            ParamType::PtrOpaque => "ptr-opaque",
        }
    }

    pub fn from_short(s: &str) -> Option<ParamType> {
        ParamType::ALL.into_iter().find(|t| t.short() == s)
    }

    fn c_base(self) -> &'static str {
        match self {
            ParamType::Char | ParamType::PtrChar => "char",
            ParamType::Int | ParamType::PtrInt => "int",
            ParamType::Float | ParamType::PtrFloat => "float",
            ParamType::PtrOpaque => "void",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    pub ty: ParamType,
}

/// A C-style function signature over the supported primitive types.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Signature {
    name: String,
    ret: ReturnType,
    params: Vec<Param>,
}

impl Signature {
    pub fn new(
        name: impl Into<String>,
        ret: ReturnType,
        params: Vec<Param>,
    ) -> Result<Self, SpecError> {
        let name = name.into();
        if !is_ident(&name) {
            return Err(SpecError::Malformed(format!("bad function name `{name}`")));
        }
        let mut seen = HashSet::new();
        for p in &params {
            if !is_ident(&p.name) {
                return Err(SpecError::Malformed(format!("bad parameter name `{}`", p.name)));
            }
            if !seen.insert(p.name.as_str()) {
                return Err(SpecError::DuplicateParam(p.name.clone()));
            }
        }
        if ret == ReturnType::Void && !params.iter().any(|p| p.ty.is_pointer()) {
            return Err(SpecError::Unobservable);
        }
        Ok(Signature { name, ret, params })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn ret(&self) -> ReturnType {
        self.ret
    }

    pub fn params(&self) -> &[Param] {
        &self.params
    }

    pub fn arity(&self) -> usize {
        self.params.len()
    }

    pub fn param_index(&self, name: &str) -> Option<usize> {
        self.params.iter().position(|p| p.name == name)
    }

    pub fn param(&self, name: &str) -> Option<&Param> {
        self.params.iter().find(|p| p.name == name)
    }

    /// Indices of pointer parameters, in declaration order.
    pub fn pointer_params(&self) -> Vec<usize> {
        (0..self.params.len())
            .filter(|&i| self.params[i].ty.is_pointer())
            .collect()
    }
}

impl fmt::Display for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}(", self.ret, self.name)?;
        for (i, p) in self.params.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            if p.ty.is_pointer() {
                write!(f, "{} *{}", p.ty.c_base(), p.name)?;
            } else {
                write!(f, "{} {}", p.ty.c_base(), p.name)?;
            }
        }
        f.write_str(")")
    }
}

impl From<Signature> for String {
    fn from(s: Signature) -> String {
        s.to_string()
    }
}

impl TryFrom<String> for Signature {
    type Error = SpecError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        parse_signature(&s)
    }
}

impl std::str::FromStr for Signature {
    type Err = SpecError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_signature(s)
    }
}

fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

#[derive(Debug, PartialEq)]
enum Tok<'a> {
    Word(&'a str),
    Star,
    LParen,
    RParen,
    Comma,
}

fn tokenize(text: &str) -> Result<Vec<Tok<'_>>, SpecError> {
    let mut out = Vec::new();
    let bytes = text.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        match c {
            ' ' | '\t' | '\n' | '\r' => i += 1,
            '*' => {
                out.push(Tok::Star);
                i += 1;
            }
            '(' => {
                out.push(Tok::LParen);
                i += 1;
            }
            ')' => {
                out.push(Tok::RParen);
                i += 1;
            }
            ',' => {
                out.push(Tok::Comma);
                i += 1;
            }
            ';' if text[i + 1..].trim().is_empty() => i += 1,
            c if c.is_ascii_alphanumeric() || c == '_' => {
                let start = i;
                while i < bytes.len() && ((bytes[i] as char).is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                out.push(Tok::Word(&text[start..i]));
            }
            other => return Err(SpecError::Malformed(format!("unexpected character `{other}`"))),
        }
    }
    Ok(out)
}

/// Parses a declaration such as `float f(float *a, float *b, int c)`.
///
/// Parameter names may be omitted (`float f(float*, float*, int)`), in which
/// case they are named `p0`, `p1`, ... by position.
pub fn parse_signature(text: &str) -> Result<Signature, SpecError> {
    let toks = tokenize(text)?;
    let mut pos = 0;
    let ret = match toks.get(pos) {
        Some(Tok::Word(w)) => match *w {
            "char" => ReturnType::Char,
            "int" => ReturnType::Int,
            "float" => ReturnType::Float,
            "void" => ReturnType::Void,
            other => return Err(SpecError::UnsupportedType(other.to_string())),
        },
        _ => return Err(SpecError::Malformed("expected return type".into())),
    };
    pos += 1;
    if toks.get(pos) == Some(&Tok::Star) {
        return Err(SpecError::UnsupportedType("pointer return".into()));
    }
    let name = match toks.get(pos) {
        Some(Tok::Word(w)) => w.to_string(),
        _ => return Err(SpecError::Malformed("expected function name".into())),
    };
    pos += 1;
    if toks.get(pos) != Some(&Tok::LParen) {
        return Err(SpecError::Malformed("expected `(`".into()));
    }
    pos += 1;

    let mut params = Vec::new();
    if toks.get(pos) == Some(&Tok::RParen) {
        pos += 1;
    } else if toks.get(pos) == Some(&Tok::Word("void")) && toks.get(pos + 1) == Some(&Tok::RParen) {
        pos += 2;
    } else {
        loop {
            let base = match toks.get(pos) {
                Some(Tok::Word(w)) => *w,
                _ => return Err(SpecError::Malformed("expected parameter type".into())),
            };
            pos += 1;
            let mut stars = 0;
            while toks.get(pos) == Some(&Tok::Star) {
                stars += 1;
                pos += 1;
            }
            let ty = match (base, stars) {
                ("char", 0) => ParamType::Char,
                ("int", 0) => ParamType::Int,
                ("float", 0) => ParamType::Float,
                ("char", 1) => ParamType::PtrChar,
                ("int", 1) => ParamType::PtrInt,
                ("float", 1) => ParamType::PtrFloat,
                ("void", 1) => ParamType::PtrOpaque,
                (b, 0) => return Err(SpecError::UnsupportedType(b.to_string())),
                (b, n) => return Err(SpecError::UnsupportedType(format!("{b}{}", "*".repeat(n)))),
            };
            let pname = match toks.get(pos) {
                Some(Tok::Word(w)) => {
                    pos += 1;
                    w.to_string()
                }
                _ => format!("p{}", params.len()),
            };
            params.push(Param { name: pname, ty });
            match toks.get(pos) {
                Some(Tok::Comma) => pos += 1,
                Some(Tok::RParen) => {
                    pos += 1;
                    break;
                }
                _ => return Err(SpecError::Malformed("expected `,` or `)`".into())),
            }
        }
    }
    if pos != toks.len() {
        return Err(SpecError::Malformed("trailing tokens after `)`".into()));
    }
    Signature::new(name, ret, params)
}

/// Contents of a buffer argument.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "elem", content = "data", rename_all = "lowercase")]
pub enum Buffer {
    Char(Vec<u8>),
    Int(Vec<i64>),
    Float(Vec<f64>),
}

impl Buffer {
    pub fn zeroed(elem: ScalarKind, len: usize) -> Buffer {
        match elem {
            ScalarKind::Char => Buffer::Char(vec![0; len]),
            ScalarKind::Int => Buffer::Int(vec![0; len]),
            ScalarKind::Float => Buffer::Float(vec![0.0; len]),
        }
    }

    pub fn elem(&self) -> ScalarKind {
        match self {
            Buffer::Char(_) => ScalarKind::Char,
            Buffer::Int(_) => ScalarKind::Int,
            Buffer::Float(_) => ScalarKind::Float,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Buffer::Char(v) => v.len(),
            Buffer::Int(v) => v.len(),
            Buffer::Float(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Copy of this buffer extended with zeros to at least `len` elements.
    pub fn padded(&self, len: usize) -> Buffer {
        let mut b = self.clone();
        match &mut b {
            Buffer::Char(v) if v.len() < len => v.resize(len, 0),
            Buffer::Int(v) if v.len() < len => v.resize(len, 0),
            Buffer::Float(v) if v.len() < len => v.resize(len, 0.0),
            _ => {}
        }
        b
    }

    pub fn truncated(&self, len: usize) -> Buffer {
        match self {
            Buffer::Char(v) => Buffer::Char(v[..len.min(v.len())].to_vec()),
            Buffer::Int(v) => Buffer::Int(v[..len.min(v.len())].to_vec()),
            Buffer::Float(v) => Buffer::Float(v[..len.min(v.len())].to_vec()),
        }
    }

    /// Element `i` widened to a scalar value.
    pub fn get(&self, i: usize) -> Option<Value> {
        match self {
            Buffer::Char(v) => v.get(i).map(|&c| Value::Char(c)),
            Buffer::Int(v) => v.get(i).map(|&x| Value::Int(x)),
            Buffer::Float(v) => v.get(i).map(|&x| Value::Float(x)),
        }
    }
}

/// A concrete argument or return value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "v", rename_all = "lowercase")]
pub enum Value {
    Char(u8),
    Int(i64),
    Float(f64),
    #[serde(rename = "buf")]
    Buffer(Buffer),
}

impl Value {
    pub fn as_buffer(&self) -> Option<&Buffer> {
        match self {
            Value::Buffer(b) => Some(b),
            _ => None,
        }
    }

    pub fn as_buffer_mut(&mut self) -> Option<&mut Buffer> {
        match self {
            Value::Buffer(b) => Some(b),
            _ => None,
        }
    }

    pub fn as_int(&self) -> Option<i64> {
        match *self {
            Value::Int(x) => Some(x),
            Value::Char(c) => Some(c as i64),
            _ => None,
        }
    }

    pub fn as_float(&self) -> Option<f64> {
        match *self {
            Value::Float(x) => Some(x),
            _ => None,
        }
    }

    /// Whether this value has the shape `ty` requires.
    pub fn conforms_to(&self, ty: ParamType) -> bool {
        match (self, ty) {
            (Value::Char(_), ParamType::Char)
            | (Value::Int(_), ParamType::Int)
            | (Value::Float(_), ParamType::Float) => true,
            (Value::Buffer(b), t) => t.pointee() == Some(b.elem()) && !b.is_empty(),
            _ => false,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Char(c) => write!(f, "{c}"),
            Value::Int(x) => write!(f, "{x}"),
            Value::Float(x) => write!(f, "{x}"),
            Value::Buffer(b) => write!(f, "{b:?}"),
        }
    }
}

/// What the oracle returned for one call.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub returned: Option<Value>,
    /// Final contents of every pointer argument, in parameter order.
    pub out_buffers: Vec<Buffer>,
}

/// One input-output example.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub inputs: Vec<Value>,
    pub returned: Option<Value>,
    pub out_buffers: Vec<Buffer>,
}

impl Example {
    pub fn observation(&self) -> Observation {
        Observation {
            returned: self.returned.clone(),
            out_buffers: self.out_buffers.clone(),
        }
    }

    pub(crate) fn check_against(&self, sig: &Signature) -> Result<(), SpecError> {
        if self.inputs.len() != sig.arity() {
            return Err(SpecError::Nonconforming(format!(
                "expected {} inputs, got {}",
                sig.arity(),
                self.inputs.len()
            )));
        }
        for (v, p) in self.inputs.iter().zip(sig.params()) {
            if !v.conforms_to(p.ty) {
                return Err(SpecError::Nonconforming(format!("argument `{}`", p.name)));
            }
        }
        if self.out_buffers.len() != sig.pointer_params().len() {
            return Err(SpecError::Nonconforming("out_buffers must cover pointer params".into()));
        }
        if self.returned.is_some() == (sig.ret() == ReturnType::Void) {
            return Err(SpecError::Nonconforming("return value presence".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_dot_signature() {
        let sig = parse_signature("float f(float *a, float *b, int c)").unwrap();
        assert_eq!(sig.ret(), ReturnType::Float);
        let tys: Vec<_> = sig.params().iter().map(|p| (p.name.as_str(), p.ty)).collect();
        assert_eq!(
            tys,
            vec![("a", ParamType::PtrFloat), ("b", ParamType::PtrFloat), ("c", ParamType::Int)]
        );
        assert_eq!(sig.to_string(), "float f(float *a, float *b, int c)");
    }

    #[test]
    fn parses_output_param_signature() {
        let sig = parse_signature("void g(int *x)").unwrap();
        assert_eq!(sig.ret(), ReturnType::Void);
        assert_eq!(sig.params()[0].ty, ParamType::PtrInt);
    }

    #[test]
    fn unnamed_params_get_positional_names() {
        let sig = parse_signature("float f(float*, float*, int)").unwrap();
        let names: Vec<_> = sig.params().iter().map(|p| p.name.as_str()).collect();
        assert_eq!(names, ["p0", "p1", "p2"]);
    }

    #[test]
    fn rejects_bad_declarations() {
        assert!(matches!(parse_signature("int h(double d)"), Err(SpecError::UnsupportedType(_))));
        assert!(matches!(parse_signature("int h(int a, int a)"), Err(SpecError::DuplicateParam(_))));
        assert!(matches!(parse_signature("int h(int a"), Err(SpecError::Malformed(_))));
        assert!(matches!(parse_signature("void h(int a)"), Err(SpecError::Unobservable)));
        assert!(matches!(parse_signature("int h(int **a)"), Err(SpecError::UnsupportedType(_))));
        assert!(matches!(parse_signature("int *h(int a)"), Err(SpecError::UnsupportedType(_))));
    }

    #[test]
    fn opaque_pointer_is_char_buffer() {
        let sig = parse_signature("void z(void *p)").unwrap();
        assert_eq!(sig.params()[0].ty.pointee(), Some(ScalarKind::Char));
        assert_eq!(sig.to_string(), "void z(void *p)");
    }

    #[test]
    fn value_json_shape() {
        let v = Value::Int(3);
        assert_eq!(serde_json::to_string(&v).unwrap(), r#"{"kind":"int","v":3}"#);
        let sig: Signature = serde_json::from_str(r#""int s(int *a, int n)""#).unwrap();
        assert_eq!(sig.arity(), 2);
    }
}
