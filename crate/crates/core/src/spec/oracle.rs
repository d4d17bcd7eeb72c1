//! Black-box reference implementations.
//!
//! An oracle is only ever queried through [`Oracle::evaluate`]. Two backends
//! exist: in-process built-ins keyed by `builtin:<name>`, and external
//! processes speaking a line-delimited JSON protocol on stdin/stdout.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};

use serde_json::{json, Value as Json};

use super::builtins;
use super::types::{Buffer, Observation, ReturnType, ScalarKind, Signature, Value};
use super::SpecError;

pub trait Oracle {
    fn signature(&self) -> &Signature;

    fn evaluate(&mut self, inputs: &[Value]) -> Result<Observation, SpecError>;
}

pub type BuiltinFn = fn(&mut [Value]) -> Option<Value>;

/// A reference function compiled into this crate.
#[derive(Clone)]
pub struct BuiltinOracle {
    id: String,
    signature: Signature,
    func: BuiltinFn,
}

impl std::fmt::Debug for BuiltinOracle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BuiltinOracle").field("id", &self.id).finish()
    }
}

impl BuiltinOracle {
    pub fn new(id: impl Into<String>, signature: Signature, func: BuiltinFn) -> Self {
        BuiltinOracle { id: id.into(), signature, func }
    }

    pub fn id(&self) -> &str {
        &self.id
    }
}

impl Oracle for BuiltinOracle {
    fn signature(&self) -> &Signature {
        &self.signature
    }

    fn evaluate(&mut self, inputs: &[Value]) -> Result<Observation, SpecError> {
        check_inputs(&self.signature, inputs)?;
        let mut args = inputs.to_vec();
        let returned = (self.func)(&mut args);
        let out_buffers = args
            .into_iter()
            .filter_map(|v| match v {
                Value::Buffer(b) => Some(b),
                _ => None,
            })
            .collect();
        Ok(Observation { returned, out_buffers })
    }
}

fn check_inputs(sig: &Signature, inputs: &[Value]) -> Result<(), SpecError> {
    if inputs.len() != sig.arity() {
        return Err(SpecError::Nonconforming(format!(
            "expected {} arguments, got {}",
            sig.arity(),
            inputs.len()
        )));
    }
    for (v, p) in inputs.iter().zip(sig.params()) {
        if !v.conforms_to(p.ty) {
            return Err(SpecError::Nonconforming(format!("argument `{}`", p.name)));
        }
    }
    Ok(())
}

/// Looks up a built-in by id, with or without the `builtin:` prefix.
pub fn builtin_oracle(id: &str) -> Option<BuiltinOracle> {
    let name = id.strip_prefix("builtin:").unwrap_or(id);
    builtins::lookup(name)
}

/// An oracle backed by a child process.
///
/// The child receives one request per line and must answer each with exactly
/// one response line.
pub struct ProcessOracle {
    signature: Signature,
    command: String,
    child: Child,
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
}

impl ProcessOracle {
    /// Spawns `command` through `sh -c`.
    pub fn spawn(signature: Signature, command: &str) -> Result<Self, SpecError> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| SpecError::Observation(format!("spawn `{command}`: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        Ok(ProcessOracle {
            signature,
            command: command.to_string(),
            child,
            stdin,
            stdout,
        })
    }

    fn fail(&mut self, why: impl std::fmt::Display) -> SpecError {
        let status = self.child.try_wait().ok().flatten();
        match status {
            Some(s) => SpecError::Observation(format!("`{}` {why} ({s})", self.command)),
            None => SpecError::Observation(format!("`{}` {why}", self.command)),
        }
    }
}

impl Drop for ProcessOracle {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

impl Oracle for ProcessOracle {
    fn signature(&self) -> &Signature {
        &self.signature
    }

    fn evaluate(&mut self, inputs: &[Value]) -> Result<Observation, SpecError> {
        check_inputs(&self.signature, inputs)?;
        let line = encode_request(inputs).to_string();
        if let Err(e) = writeln!(self.stdin, "{line}").and_then(|_| self.stdin.flush()) {
            return Err(self.fail(format!("write failed: {e}")));
        }
        let mut resp = String::new();
        match self.stdout.read_line(&mut resp) {
            Ok(0) => return Err(self.fail("closed its output")),
            Err(e) => return Err(self.fail(format!("read failed: {e}"))),
            Ok(_) => {}
        }
        let json: Json = serde_json::from_str(resp.trim())
            .map_err(|e| SpecError::Observation(format!("malformed response: {e}")))?;
        decode_response(&self.signature, inputs, &json)
    }
}

/// Builds an oracle from a CLI-style id: `builtin:<name>` or `proc:<command>`.
pub fn open_oracle(id: &str, signature: Option<&Signature>) -> Result<Box<dyn Oracle>, SpecError> {
    if let Some(cmd) = id.strip_prefix("proc:") {
        let sig = signature
            .cloned()
            .ok_or_else(|| SpecError::Observation("process oracles need an explicit signature".into()))?;
        return Ok(Box::new(ProcessOracle::spawn(sig, cmd)?));
    }
    let b = builtin_oracle(id).ok_or_else(|| SpecError::UnknownOracle(id.to_string()))?;
    if let Some(sig) = signature {
        if sig.params().iter().map(|p| p.ty).ne(b.signature().params().iter().map(|p| p.ty))
            || sig.ret() != b.signature().ret()
        {
            return Err(SpecError::Nonconforming(format!(
                "oracle `{id}` has signature `{}`",
                b.signature()
            )));
        }
    }
    Ok(Box::new(b))
}

fn scalar_json(v: &Value) -> Json {
    match v {
        Value::Char(c) => json!({"kind": "char", "v": c}),
        Value::Int(x) => json!({"kind": "int", "v": x}),
        Value::Float(x) => json!({"kind": "float", "v": x}),
        Value::Buffer(b) => buffer_request_json(b),
    }
}

fn buffer_data_json(b: &Buffer) -> Json {
    match b {
        Buffer::Char(d) => json!(d),
        Buffer::Int(d) => json!(d),
        Buffer::Float(d) => json!(d),
    }
}

fn buffer_request_json(b: &Buffer) -> Json {
    json!({"kind": "buf", "elem": b.elem().name(), "data": buffer_data_json(b)})
}

/// `{"args":[{"kind":"int","v":3}, {"kind":"buf","elem":"float","data":[...]}]}`
pub fn encode_request(inputs: &[Value]) -> Json {
    json!({"args": inputs.iter().map(scalar_json).collect::<Vec<_>>()})
}

/// Response line produced by a conforming oracle process.
pub fn encode_response(obs: &Observation) -> Json {
    json!({
        "ret": obs.returned.as_ref().map(scalar_json),
        "bufs": obs.out_buffers.iter().map(buffer_data_json).collect::<Vec<_>>(),
    })
}

/// Parses one request line back into argument values.
pub fn decode_request(json: &Json) -> Result<Vec<Value>, SpecError> {
    let bad = |m: &str| SpecError::Observation(format!("malformed request: {m}"));
    let args = json.get("args").and_then(Json::as_array).ok_or_else(|| bad("missing args"))?;
    args.iter()
        .map(|a| {
            let kind = a.get("kind").and_then(Json::as_str).ok_or_else(|| bad("missing kind"))?;
            match kind {
                "buf" => {
                    let elem = match a.get("elem").and_then(Json::as_str) {
                        Some("char") => ScalarKind::Char,
                        Some("int") => ScalarKind::Int,
                        Some("float") => ScalarKind::Float,
                        _ => return Err(bad("bad elem")),
                    };
                    let data = a.get("data").ok_or_else(|| bad("missing data"))?;
                    decode_buffer(elem, data).map(Value::Buffer).ok_or_else(|| bad("bad data"))
                }
                k => decode_scalar(k, a.get("v")).ok_or_else(|| bad("bad scalar")),
            }
        })
        .collect()
}

fn decode_scalar(kind: &str, v: Option<&Json>) -> Option<Value> {
    let v = v?;
    match kind {
        "char" => v.as_u64().and_then(|c| u8::try_from(c).ok()).map(Value::Char),
        "int" => v.as_i64().map(Value::Int),
        "float" => v.as_f64().map(Value::Float),
        _ => None,
    }
}

fn decode_buffer(elem: ScalarKind, data: &Json) -> Option<Buffer> {
    let arr = data.as_array()?;
    Some(match elem {
        ScalarKind::Char => Buffer::Char(
            arr.iter()
                .map(|x| x.as_u64().and_then(|c| u8::try_from(c).ok()))
                .collect::<Option<_>>()?,
        ),
        ScalarKind::Int => Buffer::Int(arr.iter().map(Json::as_i64).collect::<Option<_>>()?),
        ScalarKind::Float => Buffer::Float(arr.iter().map(Json::as_f64).collect::<Option<_>>()?),
    })
}

/// Checks a response against the signature and the request it answers.
pub fn decode_response(sig: &Signature, inputs: &[Value], json: &Json) -> Result<Observation, SpecError> {
    let bad = |m: &str| SpecError::Observation(format!("protocol violation: {m}"));
    let returned = match (json.get("ret"), sig.ret()) {
        (None | Some(Json::Null), ReturnType::Void) => None,
        (Some(r), ReturnType::Void) => return Err(bad(&format!("void function returned {r}"))),
        (Some(r), rt) => {
            let kind = r.get("kind").and_then(Json::as_str).ok_or_else(|| bad("ret.kind"))?;
            let v = decode_scalar(kind, r.get("v")).ok_or_else(|| bad("ret.v"))?;
            let want = rt.scalar().unwrap();
            let ok = matches!(
                (&v, want),
                (Value::Char(_), ScalarKind::Char) | (Value::Int(_), ScalarKind::Int) | (Value::Float(_), ScalarKind::Float)
            );
            if !ok {
                return Err(bad("ret has wrong kind"));
            }
            Some(v)
        }
        (None, _) => return Err(bad("missing ret")),
    };
    let bufs = json.get("bufs").and_then(Json::as_array).ok_or_else(|| bad("missing bufs"))?;
    let originals: Vec<&Buffer> = inputs.iter().filter_map(Value::as_buffer).collect();
    if bufs.len() != originals.len() {
        return Err(bad("bufs must cover every pointer param"));
    }
    let out_buffers = bufs
        .iter()
        .zip(&originals)
        .map(|(data, orig)| {
            let b = decode_buffer(orig.elem(), data).ok_or_else(|| bad("buffer data"))?;
            if b.len() != orig.len() {
                return Err(bad("buffer length changed"));
            }
            Ok(b)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Observation { returned, out_buffers })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spec::parse_signature;

    #[test]
    fn request_wire_format() {
        let req = encode_request(&[Value::Int(3), Value::Buffer(Buffer::Float(vec![1.5]))]);
        assert_eq!(
            req.to_string(),
            r#"{"args":[{"kind":"int","v":3},{"data":[1.5],"elem":"float","kind":"buf"}]}"#
        );
        let back = decode_request(&req).unwrap();
        assert_eq!(back, vec![Value::Int(3), Value::Buffer(Buffer::Float(vec![1.5]))]);
    }

    #[test]
    fn response_must_cover_pointer_params() {
        let sig = parse_signature("void g(int *x)").unwrap();
        let inputs = [Value::Buffer(Buffer::Int(vec![1, 2]))];
        let ok: Json = serde_json::from_str(r#"{"ret":null,"bufs":[[3,4]]}"#).unwrap();
        let obs = decode_response(&sig, &inputs, &ok).unwrap();
        assert_eq!(obs.out_buffers, vec![Buffer::Int(vec![3, 4])]);
        let short: Json = serde_json::from_str(r#"{"ret":null,"bufs":[]}"#).unwrap();
        assert!(decode_response(&sig, &inputs, &short).is_err());
        let resized: Json = serde_json::from_str(r#"{"ret":null,"bufs":[[1]]}"#).unwrap();
        assert!(decode_response(&sig, &inputs, &resized).is_err());
        let with_ret: Json = serde_json::from_str(r#"{"ret":{"kind":"int","v":1},"bufs":[[1,2]]}"#).unwrap();
        assert!(decode_response(&sig, &inputs, &with_ret).is_err());
    }

    #[test]
    fn builtin_lookup_accepts_prefix() {
        assert!(builtin_oracle("builtin:dot").is_some());
        assert!(builtin_oracle("dot").is_some());
        assert!(builtin_oracle("builtin:nope").is_none());
    }
}
