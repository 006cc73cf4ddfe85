//! The meta-protocol: one space-separated line per observation event,
//! `<timestamp> <uri-path> <content-format> <data>`.

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use thiserror::Error;

use crate::codec::ContentFormat;

/// One observation event.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MetaRecord {
    /// Milliseconds since the Unix epoch.
    pub timestamp: u64,
    pub uri_path: String,
    pub format: ContentFormat,
    pub data: Vec<u8>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetaError {
    #[error("meta record needs four fields")]
    MissingField,
    #[error("bad timestamp")]
    Timestamp,
    #[error("unknown content format {0:?}")]
    Format(String),
    #[error("bad base64 data")]
    Base64,
}

/// Renders a record. Text and JSON data are embedded verbatim, binary data
/// is base64 encoded. No trailing newline.
pub fn format_meta_record(r: &MetaRecord) -> String {
    let data = match r.format {
        ContentFormat::Binary => STANDARD.encode(&r.data),
        _ => String::from_utf8_lossy(&r.data).into_owned(),
    };
    format!("{} {} {} {}", r.timestamp, r.uri_path, r.format.name(), data)
}

pub fn parse_meta_record(line: &str) -> Result<MetaRecord, MetaError> {
    let mut fields = line.splitn(4, ' ');
    let timestamp = fields.next().ok_or(MetaError::MissingField)?;
    let uri_path = fields.next().ok_or(MetaError::MissingField)?;
    let format = fields.next().ok_or(MetaError::MissingField)?;
    let data = fields.next().ok_or(MetaError::MissingField)?;

    let timestamp = timestamp.parse().map_err(|_| MetaError::Timestamp)?;
    let format = ContentFormat::from_name(format).ok_or_else(|| MetaError::Format(format.to_string()))?;
    let data = match format {
        ContentFormat::Binary => STANDARD.decode(data).map_err(|_| MetaError::Base64)?,
        _ => data.as_bytes().to_vec(),
    };
    Ok(MetaRecord { timestamp, uri_path: uri_path.to_string(), format, data })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_line_is_byte_exact() {
        let r = MetaRecord {
            timestamp: 1521554211213,
            uri_path: "/kv/foo/bar".into(),
            format: ContentFormat::Json,
            data: br#"{"room": "lounge", "value": 1}"#.to_vec(),
        };
        assert_eq!(format_meta_record(&r), r#"1521554211213 /kv/foo/bar json {"room": "lounge", "value": 1}"#);
        assert_eq!(parse_meta_record(&format_meta_record(&r)), Ok(r));
    }

    #[test]
    fn text_line() {
        let r = MetaRecord { timestamp: 0, uri_path: "/a".into(), format: ContentFormat::Text, data: b"x".to_vec() };
        assert_eq!(format_meta_record(&r), "0 /a text x");
    }

    #[test]
    fn binary_is_base64() {
        let r = MetaRecord {
            timestamp: 5,
            uri_path: "/b".into(),
            format: ContentFormat::Binary,
            data: vec![0, 1, 2, 0xfd, 0xfe, 0xff, 0x10, 0x20],
        };
        // expected value from Python's base64 module
        assert_eq!(format_meta_record(&r), "5 /b binary AAEC/f7/ECA=");
        assert_eq!(parse_meta_record("5 /b binary AAEC/f7/ECA="), Ok(r));
    }

    #[test]
    fn empty_data_and_bad_lines() {
        let r = parse_meta_record("7 /p text ").unwrap();
        assert!(r.data.is_empty());
        assert_eq!(parse_meta_record("7 /p text"), Err(MetaError::MissingField));
        assert_eq!(parse_meta_record("x /p text d"), Err(MetaError::Timestamp));
        assert_eq!(parse_meta_record("7 /p yaml d"), Err(MetaError::Format("yaml".into())));
        assert_eq!(parse_meta_record("7 /p binary !!"), Err(MetaError::Base64));
    }
}
