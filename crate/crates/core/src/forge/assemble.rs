//! Hand assembly of canary pickles, opcode by opcode.

use super::ForgeError;
use std::fmt;
use std::str::FromStr;

/// The only callables a canary may name.
pub const BENIGN_CANARIES: &[(&str, &str)] = &[("builtins", "print")];

pub const SENTINEL: &str = "pg-canary";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Literal {
    Str(String),
    Int(i32),
    Bool(bool),
    None,
    Dict(Vec<(Literal, Literal)>),
    /// A global pushed as a value, not called.
    Global(String, String),
}

impl From<&str> for Literal {
    fn from(s: &str) -> Self {
        Literal::Str(s.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Variant {
    GlobalOp,
    StackGlobal,
    /// No protocol header; the module-name string is the first byte.
    StackGlobalArgAt0,
    Memoized,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::GlobalOp, Variant::StackGlobal, Variant::StackGlobalArgAt0, Variant::Memoized];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::GlobalOp => "global-op",
            Variant::StackGlobal => "stack-global",
            Variant::StackGlobalArgAt0 => "stack-global-arg-at-0",
            Variant::Memoized => "memoized",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = ForgeError;
    fn from_str(s: &str) -> Result<Self, ForgeError> {
        Variant::ALL.into_iter().find(|v| v.as_str() == s).ok_or_else(|| ForgeError::UnknownVariant(s.to_string()))
    }
}

pub fn is_benign(module: &str, name: &str) -> bool {
    BENIGN_CANARIES.iter().any(|(m, n)| *m == module && *n == name)
}

/// Build a stream that imports `module.name` and calls it with `args`.
pub fn assemble_pickle(module: &str, name: &str, args: &[Literal], variant: Variant) -> Result<Vec<u8>, ForgeError> {
    if !is_benign(module, name) {
        return Err(ForgeError::NotBenign(format!("{module}.{name}")));
    }
    call_pickle(module, name, args, variant)
}

/// Same as [`assemble_pickle`] without the benign-callee gate. Only the
/// gadget corpus uses it, with sentinel arguments.
pub(crate) fn call_pickle(module: &str, name: &str, args: &[Literal], variant: Variant) -> Result<Vec<u8>, ForgeError> {
    let text = variant == Variant::StackGlobalArgAt0;
    let mut out = Vec::new();
    match variant {
        Variant::GlobalOp => {
            out.extend_from_slice(b"\x80\x02");
            global(&mut out, module, name);
        }
        Variant::StackGlobal => {
            out.extend_from_slice(b"\x80\x04");
            short_unicode(&mut out, module);
            short_unicode(&mut out, name);
            out.push(0x93);
        }
        Variant::StackGlobalArgAt0 => {
            text_string(&mut out, module)?;
            text_string(&mut out, name)?;
            out.push(0x93);
        }
        Variant::Memoized => {
            // memo 0 and 1 hold the names, memo 2 the callable
            out.extend_from_slice(b"\x80\x04");
            short_unicode(&mut out, module);
            out.push(0x94);
            short_unicode(&mut out, name);
            out.push(0x94);
            out.extend_from_slice(b"\x93\x94");
            out.extend_from_slice(b"0h\x02");
        }
    }
    args_tuple(&mut out, args, text)?;
    out.extend_from_slice(b"R.");
    Ok(out)
}

fn global(out: &mut Vec<u8>, module: &str, name: &str) {
    out.push(b'c');
    out.extend_from_slice(module.as_bytes());
    out.push(b'\n');
    out.extend_from_slice(name.as_bytes());
    out.push(b'\n');
}

fn short_unicode(out: &mut Vec<u8>, s: &str) {
    if s.len() < 256 {
        out.push(0x8c);
        out.push(s.len() as u8);
    } else {
        out.push(b'X');
        out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    }
    out.extend_from_slice(s.as_bytes());
}

fn text_string(out: &mut Vec<u8>, s: &str) -> Result<(), ForgeError> {
    if !s.bytes().all(|b| b.is_ascii_graphic() && b != b'\'' && b != b'\\' || b == b' ') {
        return Err(ForgeError::Unencodable(s.to_string()));
    }
    out.extend_from_slice(b"S'");
    out.extend_from_slice(s.as_bytes());
    out.extend_from_slice(b"'\n");
    Ok(())
}

fn args_tuple(out: &mut Vec<u8>, args: &[Literal], text: bool) -> Result<(), ForgeError> {
    match args.len() {
        0 => out.push(b')'),
        1..=3 if !text || args.len() == 1 => {
            for a in args {
                literal(out, a, text)?;
            }
            out.push([0x85, 0x86, 0x87][args.len() - 1]);
        }
        _ => {
            out.push(b'(');
            for a in args {
                literal(out, a, text)?;
            }
            out.push(b't');
        }
    }
    Ok(())
}

fn literal(out: &mut Vec<u8>, v: &Literal, text: bool) -> Result<(), ForgeError> {
    match v {
        Literal::Str(s) if text => text_string(out, s)?,
        Literal::Str(s) => {
            out.push(b'X');
            out.extend_from_slice(&(s.len() as u32).to_le_bytes());
            out.extend_from_slice(s.as_bytes());
        }
        Literal::Int(i) if text => out.extend_from_slice(format!("I{i}\n").as_bytes()),
        Literal::Int(i) => {
            out.push(b'J');
            out.extend_from_slice(&i.to_le_bytes());
        }
        Literal::Bool(b) if text => out.extend_from_slice(if *b { b"I01\n" } else { b"I00\n" }),
        Literal::Bool(b) => out.push(if *b { 0x88 } else { 0x89 }),
        Literal::None => out.push(b'N'),
        Literal::Dict(items) => {
            out.push(b'(');
            for (k, v) in items {
                literal(out, k, text)?;
                literal(out, v, text)?;
            }
            out.push(b'd');
        }
        Literal::Global(m, n) => global(out, m, n),
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pickle::{emulate_stream, ResolvedBy, VmLimits};

    fn canary(v: Variant) -> Vec<u8> {
        assemble_pickle("builtins", "print", &[SENTINEL.into()], v).unwrap()
    }

    #[test]
    fn global_op_bytes() {
        assert_eq!(canary(Variant::GlobalOp), b"\x80\x02cbuiltins\nprint\nX\t\x00\x00\x00pg-canary\x85R.".to_vec());
    }

    #[test]
    fn arg_at_zero_headerless_shape() {
        let b = canary(Variant::StackGlobalArgAt0);
        assert_eq!(b, b"S'builtins'\nS'print'\n\x93S'pg-canary'\n\x85R.".to_vec());
        let r = emulate_stream(&b, &VmLimits::default());
        assert_eq!(r.imports.len(), 1);
        assert_eq!(r.imports[0].import.fqname(), "builtins.print");
        assert_eq!(r.imports[0].import.resolved_by, ResolvedBy::StackGlobal);
        assert_eq!(r.imports[0].offset, 21);
        // no protocol header, yet a protocol 4 opcode
        assert_eq!(r.anomalies.len(), 1);
        assert_eq!(r.anomalies[0].kind, crate::AnomalyKind::ProtocolMismatch);
    }

    #[test]
    fn every_variant_calls_the_canary() {
        for v in Variant::ALL {
            let r = emulate_stream(&canary(v), &VmLimits::default());
            assert_eq!(r.anomalies.is_empty(), v != Variant::StackGlobalArgAt0, "{v}: {:?}", r.anomalies);
            assert_eq!(r.calls.len(), 1, "{v}");
            assert_eq!(r.calls[0].callee.fqname(), "builtins.print");
            assert_eq!(r.calls[0].args[0].render(), "\"pg-canary\"");
            assert_eq!(v.as_str().parse::<Variant>().unwrap(), v);
        }
    }

    #[test]
    fn empty_args_are_tuple0() {
        let b = assemble_pickle("builtins", "print", &[], Variant::GlobalOp).unwrap();
        assert!(b.ends_with(b"\n)R."));
    }

    #[test]
    fn long_arg_lists_use_mark() {
        let args: Vec<Literal> = (0..5).map(Literal::Int).collect();
        let b = assemble_pickle("builtins", "print", &args, Variant::GlobalOp).unwrap();
        assert!(b.ends_with(b"tR."));
        let r = emulate_stream(&b, &VmLimits::default());
        assert_eq!(r.calls[0].args.len(), 5);
    }

    #[test]
    fn non_benign_callee_rejected() {
        assert!(matches!(assemble_pickle("os", "system", &[], Variant::GlobalOp), Err(ForgeError::NotBenign(_))));
        assert!(matches!(
            assemble_pickle("builtins", "print", &["it's".into()], Variant::StackGlobalArgAt0),
            Err(ForgeError::Unencodable(_))
        ));
    }
}
