//! Wire codec for Zest messages.
//!
//! A message is a 4 byte header (code, option count, token length in
//! network order), followed by the token bytes, the options as
//! `(code: u16, length: u16, value)` records and finally the payload, which
//! runs to the end of the frame.

use std::fmt;

use thiserror::Error;

/// Request and response codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Code {
    Get,
    Post,
    Delete,
    /// 65, acknowledge (POST).
    Ack,
    /// 66, acknowledge (DELETE).
    AckDelete,
    /// 69, acknowledge with payload (GET/POST).
    Content,
    BadRequest,
    Unauthorized,
    NotAcceptable,
    RequestEntityTooLarge,
    UnsupportedContentFormat,
    InternalServerError,
    ServiceUnavailable,
}

impl Code {
    pub const ALL: [Code; 13] = [
        Code::Get,
        Code::Post,
        Code::Delete,
        Code::Ack,
        Code::AckDelete,
        Code::Content,
        Code::BadRequest,
        Code::Unauthorized,
        Code::NotAcceptable,
        Code::RequestEntityTooLarge,
        Code::UnsupportedContentFormat,
        Code::InternalServerError,
        Code::ServiceUnavailable,
    ];

    pub fn value(self) -> u8 {
        match self {
            Code::Get => 1,
            Code::Post => 2,
            Code::Delete => 4,
            Code::Ack => 65,
            Code::AckDelete => 66,
            Code::Content => 69,
            Code::BadRequest => 128,
            Code::Unauthorized => 129,
            Code::NotAcceptable => 134,
            Code::RequestEntityTooLarge => 141,
            Code::UnsupportedContentFormat => 143,
            Code::InternalServerError => 160,
            Code::ServiceUnavailable => 163,
        }
    }

    pub fn from_value(value: u8) -> Option<Code> {
        Code::ALL.into_iter().find(|c| c.value() == value)
    }

    pub fn is_request(self) -> bool {
        self.value() < 64
    }

    /// Success responses: 65, 66 and 69.
    pub fn is_success(self) -> bool {
        matches!(self, Code::Ack | Code::AckDelete | Code::Content)
    }

    pub fn name(self) -> &'static str {
        match self {
            Code::Get => "GET",
            Code::Post => "POST",
            Code::Delete => "DELETE",
            Code::Ack => "Acknowledge (POST)",
            Code::AckDelete => "Acknowledge (DELETE)",
            Code::Content => "Acknowledge with payload (GET/POST)",
            Code::BadRequest => "Bad request",
            Code::Unauthorized => "Unauthorised",
            Code::NotAcceptable => "Not acceptable",
            Code::RequestEntityTooLarge => "Request entity too large",
            Code::UnsupportedContentFormat => "Unsupported content format",
            Code::InternalServerError => "Internal server error",
            Code::ServiceUnavailable => "Service unavailable",
        }
    }

    /// Parses a method name (`GET`, `POST`, `DELETE`).
    pub fn from_method(method: &str) -> Option<Code> {
        match method {
            "GET" => Some(Code::Get),
            "POST" => Some(Code::Post),
            "DELETE" => Some(Code::Delete),
            _ => None,
        }
    }
}

impl fmt::Display for Code {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.value(), self.name())
    }
}

/// Option numbers.
pub mod opt {
    pub const URI_HOST: u16 = 3;
    pub const OBSERVE: u16 = 6;
    pub const URI_PATH: u16 = 11;
    pub const CONTENT_FORMAT: u16 = 12;
    pub const MAX_AGE: u16 = 14;
    pub const PUBLIC_KEY: u16 = 2048;

    /// Every option the protocol defines, in the row order of the option matrix.
    pub const KNOWN: [u16; 6] = [URI_PATH, URI_HOST, CONTENT_FORMAT, OBSERVE, MAX_AGE, PUBLIC_KEY];

    pub fn name(code: u16) -> Option<&'static str> {
        Some(match code {
            URI_HOST => "uri_host",
            OBSERVE => "observe",
            URI_PATH => "uri_path",
            CONTENT_FORMAT => "content_format",
            MAX_AGE => "max_age",
            PUBLIC_KEY => "public_key",
            _ => return None,
        })
    }
}

/// Payload content format.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ContentFormat {
    Text,
    Binary,
    Json,
}

impl ContentFormat {
    pub fn value(self) -> u32 {
        match self {
            ContentFormat::Text => 0,
            ContentFormat::Binary => 42,
            ContentFormat::Json => 50,
        }
    }

    pub fn from_value(value: u32) -> Result<ContentFormat, CodecError> {
        match value {
            0 => Ok(ContentFormat::Text),
            42 => Ok(ContentFormat::Binary),
            50 => Ok(ContentFormat::Json),
            other => Err(CodecError::UnsupportedContentFormat(other)),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ContentFormat::Text => "text",
            ContentFormat::Binary => "binary",
            ContentFormat::Json => "json",
        }
    }

    pub fn from_name(name: &str) -> Option<ContentFormat> {
        match name {
            "text" => Some(ContentFormat::Text),
            "binary" => Some(ContentFormat::Binary),
            "json" => Some(ContentFormat::Json),
            _ => None,
        }
    }
}

impl fmt::Display for ContentFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// The three observation modes carried by the observe option.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ObserveMode {
    Data,
    Audit,
    Notify,
}

impl ObserveMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ObserveMode::Data => "data",
            ObserveMode::Audit => "audit",
            ObserveMode::Notify => "notify",
        }
    }

    pub fn parse(s: &str) -> Option<ObserveMode> {
        match s {
            "data" => Some(ObserveMode::Data),
            "audit" => Some(ObserveMode::Audit),
            "notify" => Some(ObserveMode::Notify),
            _ => None,
        }
    }
}

impl fmt::Display for ObserveMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CodecError {
    #[error("malformed message: {0}")]
    Malformed(&'static str),
    #[error("unknown message code {0}")]
    UnknownCode(u8),
    #[error("token of {0} bytes exceeds 65535")]
    TokenTooLong(usize),
    #[error("{0} options exceed 255")]
    TooManyOptions(usize),
    #[error("option {code} value of {len} bytes exceeds 65535")]
    OptionTooLong { code: u16, len: usize },
    #[error("option {0} does not carry an unsigned integer")]
    NotNumeric(u16),
    #[error("value {0} does not fit in 32 bits")]
    ValueOutOfRange(u64),
    #[error("unsupported content format {0}")]
    UnsupportedContentFormat(u32),
    #[error("option {0} is not valid UTF-8")]
    NotUtf8(u16),
}

/// One TLV-encoded option.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct OptionRecord {
    pub code: u16,
    pub value: Vec<u8>,
}

impl OptionRecord {
    pub fn new(code: u16, value: impl Into<Vec<u8>>) -> Self {
        OptionRecord { code, value: value.into() }
    }

    pub fn string(code: u16, value: &str) -> Self {
        OptionRecord::new(code, value.as_bytes())
    }

    pub fn as_str(&self) -> Result<&str, CodecError> {
        std::str::from_utf8(&self.value).map_err(|_| CodecError::NotUtf8(self.code))
    }

    /// Reads a numeric option value. Widths below four bytes are accepted as
    /// big-endian for peers that use a minimal encoding.
    pub fn as_uint(&self) -> Result<u32, CodecError> {
        if self.value.len() > 4 {
            return Err(CodecError::NotNumeric(self.code));
        }
        Ok(self.value.iter().fold(0u32, |acc, b| (acc << 8) | u32::from(*b)))
    }
}

/// Builds a numeric option (`content_format` or `max_age`) as a 4 byte
/// network-order integer.
pub fn encode_uint_option(code: u16, value: u64) -> Result<OptionRecord, CodecError> {
    if code != opt::CONTENT_FORMAT && code != opt::MAX_AGE {
        return Err(CodecError::NotNumeric(code));
    }
    let v = u32::try_from(value).map_err(|_| CodecError::ValueOutOfRange(value))?;
    Ok(OptionRecord::new(code, v.to_be_bytes()))
}

/// One protocol unit.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Message {
    pub code: Code,
    pub token: Vec<u8>,
    pub options: Vec<OptionRecord>,
    pub payload: Vec<u8>,
}

impl Message {
    pub fn new(code: Code) -> Self {
        Message { code, token: Vec::new(), options: Vec::new(), payload: Vec::new() }
    }

    /// A request carrying the three options every request needs.
    pub fn request(code: Code, path: &str, host: &str, format: ContentFormat) -> Self {
        Message::new(code)
            .with_option(OptionRecord::string(opt::URI_PATH, path))
            .with_option(OptionRecord::string(opt::URI_HOST, host))
            .with_content_format(format)
    }

    pub fn with_token(mut self, token: impl Into<Vec<u8>>) -> Self {
        self.token = token.into();
        self
    }

    pub fn with_option(mut self, option: OptionRecord) -> Self {
        self.options.push(option);
        self
    }

    pub fn with_content_format(self, format: ContentFormat) -> Self {
        self.with_option(OptionRecord::new(opt::CONTENT_FORMAT, format.value().to_be_bytes()))
    }

    pub fn with_payload(mut self, payload: impl Into<Vec<u8>>) -> Self {
        self.payload = payload.into();
        self
    }

    /// Last occurrence of `code`; duplicates are kept on the wire but the
    /// final one is authoritative.
    pub fn option(&self, code: u16) -> Option<&OptionRecord> {
        self.options.iter().rev().find(|o| o.code == code)
    }

    pub fn has_option(&self, code: u16) -> bool {
        self.options.iter().any(|o| o.code == code)
    }

    pub fn string_option(&self, code: u16) -> Result<Option<&str>, CodecError> {
        self.option(code).map(OptionRecord::as_str).transpose()
    }

    pub fn uint_option(&self, code: u16) -> Result<Option<u32>, CodecError> {
        self.option(code).map(OptionRecord::as_uint).transpose()
    }

    pub fn uri_path(&self) -> Result<Option<&str>, CodecError> {
        self.string_option(opt::URI_PATH)
    }

    pub fn uri_host(&self) -> Result<Option<&str>, CodecError> {
        self.string_option(opt::URI_HOST)
    }

    pub fn content_format(&self) -> Result<Option<ContentFormat>, CodecError> {
        self.uint_option(opt::CONTENT_FORMAT)?.map(ContentFormat::from_value).transpose()
    }

    pub fn max_age(&self) -> Result<Option<u32>, CodecError> {
        self.uint_option(opt::MAX_AGE)
    }

    /// Raw observe value; `None` when the option is absent.
    pub fn observe(&self) -> Result<Option<&str>, CodecError> {
        self.string_option(opt::OBSERVE)
    }

    pub fn public_key(&self) -> Result<Option<&str>, CodecError> {
        self.string_option(opt::PUBLIC_KEY)
    }

    pub fn encoded_len(&self) -> usize {
        4 + self.token.len()
            + self.options.iter().map(|o| 4 + o.value.len()).sum::<usize>()
            + self.payload.len()
    }

    pub fn encode(&self) -> Result<Vec<u8>, CodecError> {
        encode_message(self)
    }

    pub fn decode(bytes: &[u8]) -> Result<Message, CodecError> {
        decode_message(bytes)
    }
}

pub fn encode_message(m: &Message) -> Result<Vec<u8>, CodecError> {
    let token_len = u16::try_from(m.token.len()).map_err(|_| CodecError::TokenTooLong(m.token.len()))?;
    let count = u8::try_from(m.options.len()).map_err(|_| CodecError::TooManyOptions(m.options.len()))?;

    let mut out = Vec::with_capacity(m.encoded_len());
    out.push(m.code.value());
    out.push(count);
    out.extend_from_slice(&token_len.to_be_bytes());
    out.extend_from_slice(&m.token);
    for o in &m.options {
        let len = u16::try_from(o.value.len())
            .map_err(|_| CodecError::OptionTooLong { code: o.code, len: o.value.len() })?;
        out.extend_from_slice(&o.code.to_be_bytes());
        out.extend_from_slice(&len.to_be_bytes());
        out.extend_from_slice(&o.value);
    }
    out.extend_from_slice(&m.payload);
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8], CodecError> {
        if self.buf.len() < n {
            return Err(CodecError::Malformed(what));
        }
        let (head, tail) = self.buf.split_at(n);
        self.buf = tail;
        Ok(head)
    }

    fn u16(&mut self, what: &'static str) -> Result<u16, CodecError> {
        let b = self.take(2, what)?;
        Ok(u16::from_be_bytes([b[0], b[1]]))
    }
}

pub fn decode_message(bytes: &[u8]) -> Result<Message, CodecError> {
    let mut r = Reader { buf: bytes };
    let header = r.take(4, "truncated header")?;
    let code = Code::from_value(header[0]).ok_or(CodecError::UnknownCode(header[0]))?;
    let count = header[1] as usize;
    let token_len = u16::from_be_bytes([header[2], header[3]]) as usize;
    let token = r.take(token_len, "truncated token")?.to_vec();

    let mut options = Vec::with_capacity(count);
    for _ in 0..count {
        let code = r.u16("truncated option header")?;
        let len = r.u16("truncated option header")? as usize;
        let value = r.take(len, "truncated option value")?.to_vec();
        options.push(OptionRecord { code, value });
    }
    Ok(Message { code, token, options, payload: r.buf.to_vec() })
}

/// The six columns of the option matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MessageKind {
    GetRequest,
    GetResponse,
    PostRequest,
    PostResponse,
    DeleteRequest,
    DeleteResponse,
}

impl MessageKind {
    pub const ALL: [MessageKind; 6] = [
        MessageKind::GetRequest,
        MessageKind::GetResponse,
        MessageKind::PostRequest,
        MessageKind::PostResponse,
        MessageKind::DeleteRequest,
        MessageKind::DeleteResponse,
    ];

    pub fn of_request(code: Code) -> Option<MessageKind> {
        match code {
            Code::Get => Some(MessageKind::GetRequest),
            Code::Post => Some(MessageKind::PostRequest),
            Code::Delete => Some(MessageKind::DeleteRequest),
            _ => None,
        }
    }

    pub fn response_to(method: Code) -> Option<MessageKind> {
        match method {
            Code::Get => Some(MessageKind::GetResponse),
            Code::Post => Some(MessageKind::PostResponse),
            Code::Delete => Some(MessageKind::DeleteResponse),
            _ => None,
        }
    }

    /// Cell of the option matrix for `option` in this column.
    pub fn rule(self, option: u16) -> OptionRule {
        use MessageKind::*;
        use OptionRule::*;
        match (self, option) {
            (GetRequest | PostRequest | DeleteRequest, opt::URI_PATH | opt::URI_HOST | opt::CONTENT_FORMAT) => {
                Mandatory
            }
            (GetRequest, opt::OBSERVE | opt::MAX_AGE) => Optional,
            (GetResponse, opt::CONTENT_FORMAT) => Mandatory,
            (GetResponse, opt::PUBLIC_KEY) => Optional,
            (PostResponse, opt::CONTENT_FORMAT) => Optional,
            _ => Forbidden,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptionRule {
    Mandatory,
    Optional,
    Forbidden,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    Missing(u16),
    NotAllowed(u16),
    /// A DELETE response is header only.
    UnexpectedPayload,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Missing(code) => write!(f, "{} mandatory", opt::name(*code).unwrap_or("?")),
            Violation::NotAllowed(code) => write!(f, "{} not allowed", opt::name(*code).unwrap_or("?")),
            Violation::UnexpectedPayload => f.write_str("payload not allowed"),
        }
    }
}

/// Checks `m` against the option matrix column for `kind`. Option codes the
/// protocol does not define are ignored.
pub fn validate_options(m: &Message, kind: MessageKind) -> Result<(), Vec<Violation>> {
    let mut violations = Vec::new();
    for code in opt::KNOWN {
        let present = m.has_option(code);
        match kind.rule(code) {
            OptionRule::Mandatory if !present => violations.push(Violation::Missing(code)),
            OptionRule::Forbidden if present => violations.push(Violation::NotAllowed(code)),
            _ => {}
        }
    }
    if kind == MessageKind::DeleteResponse && !m.payload.is_empty() {
        violations.push(Violation::UnexpectedPayload);
    }
    if violations.is_empty() {
        Ok(())
    } else {
        Err(violations)
    }
}
