use serde::{Deserialize, Serialize};

/// How an opcode's inline argument is encoded in the stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArgKind {
    None,
    /// Decimal text terminated by `\n` (INT, GET, PUT).
    DecimalNlShort,
    /// Decimal text with optional trailing `L`, terminated by `\n`.
    DecimalNlLong,
    Int4,
    Uint1,
    Uint2,
    Uint4,
    Uint8,
    Long1,
    Long4,
    /// Quoted, escaped text line (STRING).
    StringNl,
    /// Raw text line (PERSID).
    StringNlNoescape,
    /// Two raw text lines, module then name (GLOBAL, INST).
    StringNlNoescapePair,
    String1,
    String4,
    Bytes1,
    Bytes4,
    Bytes8,
    ByteArray8,
    Unicode1,
    Unicode4,
    Unicode8,
    /// raw-unicode-escape text line (UNICODE).
    UnicodeNl,
    FloatNl,
    Float8,
}

macro_rules! opcodes {
    ($( $variant:ident = $byte:expr, $name:literal, $arg:ident, $proto:expr; )*) => {
        /// The complete opcode set of pickle protocols 0 through 5.
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        pub enum Opcode { $( $variant, )* }

        impl Opcode {
            pub const ALL: &'static [Opcode] = &[ $( Opcode::$variant, )* ];

            pub fn from_byte(b: u8) -> Option<Opcode> {
                match b {
                    $( $byte => Some(Opcode::$variant), )*
                    _ => None,
                }
            }

            pub fn byte(self) -> u8 {
                match self { $( Opcode::$variant => $byte, )* }
            }

            /// Name as printed by the reference disassembler.
            pub fn name(self) -> &'static str {
                match self { $( Opcode::$variant => $name, )* }
            }

            pub fn arg_kind(self) -> ArgKind {
                match self { $( Opcode::$variant => ArgKind::$arg, )* }
            }

            /// Lowest protocol that introduced the opcode.
            pub fn proto(self) -> u8 {
                match self { $( Opcode::$variant => $proto, )* }
            }
        }
    };
}

opcodes! {
    Int = b'I', "INT", DecimalNlShort, 0;
    BinInt = b'J', "BININT", Int4, 1;
    BinInt1 = b'K', "BININT1", Uint1, 1;
    BinInt2 = b'M', "BININT2", Uint2, 1;
    Long = b'L', "LONG", DecimalNlLong, 0;
    Long1 = 0x8a, "LONG1", Long1, 2;
    Long4 = 0x8b, "LONG4", Long4, 2;
    String = b'S', "STRING", StringNl, 0;
    BinString = b'T', "BINSTRING", String4, 1;
    ShortBinString = b'U', "SHORT_BINSTRING", String1, 1;
    BinBytes = b'B', "BINBYTES", Bytes4, 3;
    ShortBinBytes = b'C', "SHORT_BINBYTES", Bytes1, 3;
    BinBytes8 = 0x8e, "BINBYTES8", Bytes8, 4;
    ByteArray8 = 0x96, "BYTEARRAY8", ByteArray8, 5;
    NextBuffer = 0x97, "NEXT_BUFFER", None, 5;
    ReadonlyBuffer = 0x98, "READONLY_BUFFER", None, 5;
    None = b'N', "NONE", None, 0;
    NewTrue = 0x88, "NEWTRUE", None, 2;
    NewFalse = 0x89, "NEWFALSE", None, 2;
    Unicode = b'V', "UNICODE", UnicodeNl, 0;
    ShortBinUnicode = 0x8c, "SHORT_BINUNICODE", Unicode1, 4;
    BinUnicode = b'X', "BINUNICODE", Unicode4, 1;
    BinUnicode8 = 0x8d, "BINUNICODE8", Unicode8, 4;
    Float = b'F', "FLOAT", FloatNl, 0;
    BinFloat = b'G', "BINFLOAT", Float8, 1;
    EmptyList = b']', "EMPTY_LIST", None, 1;
    Append = b'a', "APPEND", None, 0;
    Appends = b'e', "APPENDS", None, 1;
    List = b'l', "LIST", None, 0;
    EmptyTuple = b')', "EMPTY_TUPLE", None, 1;
    Tuple = b't', "TUPLE", None, 0;
    Tuple1 = 0x85, "TUPLE1", None, 2;
    Tuple2 = 0x86, "TUPLE2", None, 2;
    Tuple3 = 0x87, "TUPLE3", None, 2;
    EmptyDict = b'}', "EMPTY_DICT", None, 1;
    Dict = b'd', "DICT", None, 0;
    SetItem = b's', "SETITEM", None, 0;
    SetItems = b'u', "SETITEMS", None, 1;
    EmptySet = 0x8f, "EMPTY_SET", None, 4;
    AddItems = 0x90, "ADDITEMS", None, 4;
    FrozenSet = 0x91, "FROZENSET", None, 4;
    Pop = b'0', "POP", None, 0;
    Dup = b'2', "DUP", None, 0;
    Mark = b'(', "MARK", None, 0;
    PopMark = b'1', "POP_MARK", None, 1;
    Get = b'g', "GET", DecimalNlShort, 0;
    BinGet = b'h', "BINGET", Uint1, 1;
    LongBinGet = b'j', "LONG_BINGET", Uint4, 1;
    Put = b'p', "PUT", DecimalNlShort, 0;
    BinPut = b'q', "BINPUT", Uint1, 1;
    LongBinPut = b'r', "LONG_BINPUT", Uint4, 1;
    Memoize = 0x94, "MEMOIZE", None, 4;
    Ext1 = 0x82, "EXT1", Uint1, 2;
    Ext2 = 0x83, "EXT2", Uint2, 2;
    Ext4 = 0x84, "EXT4", Int4, 2;
    Global = b'c', "GLOBAL", StringNlNoescapePair, 0;
    StackGlobal = 0x93, "STACK_GLOBAL", None, 4;
    Reduce = b'R', "REDUCE", None, 0;
    Build = b'b', "BUILD", None, 0;
    Inst = b'i', "INST", StringNlNoescapePair, 0;
    Obj = b'o', "OBJ", None, 1;
    NewObj = 0x81, "NEWOBJ", None, 2;
    NewObjEx = 0x92, "NEWOBJ_EX", None, 4;
    Proto = 0x80, "PROTO", Uint1, 2;
    Stop = b'.', "STOP", None, 0;
    Frame = 0x95, "FRAME", Uint8, 4;
    PersId = b'P', "PERSID", StringNlNoescape, 0;
    BinPersId = b'Q', "BINPERSID", None, 1;
}

/// Highest protocol understood by the emulator.
pub const HIGHEST_PROTOCOL: u8 = 5;

impl Opcode {
    /// Opcodes that push a string-like literal.
    pub fn is_string_literal(self) -> bool {
        matches!(
            self,
            Opcode::String
                | Opcode::BinString
                | Opcode::ShortBinString
                | Opcode::Unicode
                | Opcode::ShortBinUnicode
                | Opcode::BinUnicode
                | Opcode::BinUnicode8
        )
    }

    /// Opcodes that push a single integer literal.
    pub fn is_int_literal(self) -> bool {
        matches!(
            self,
            Opcode::Int
                | Opcode::BinInt
                | Opcode::BinInt1
                | Opcode::BinInt2
                | Opcode::Long
                | Opcode::Long1
                | Opcode::Long4
        )
    }
}
