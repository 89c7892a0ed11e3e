//! JSON Schemas for every wire body, embedded at build time.

pub const EXTRACTOR_RESPONSE: &str = include_str!("../schemas/extractor_response.schema.json");
pub const OBFUSCATOR_REQUEST: &str = include_str!("../schemas/obfuscator_request.schema.json");
pub const OBFUSCATOR_RESPONSE: &str = include_str!("../schemas/obfuscator_response.schema.json");
pub const DEOBFUSCATOR_REQUEST: &str = include_str!("../schemas/deobfuscator_request.schema.json");
pub const UPLOAD_REQUEST: &str = include_str!("../schemas/upload_request.schema.json");
pub const SHARE_REQUEST: &str = include_str!("../schemas/share_request.schema.json");
pub const SHARE_LINK: &str = include_str!("../schemas/share_link.schema.json");
pub const NOTARY_DECISION: &str = include_str!("../schemas/notary_decision.schema.json");
pub const REVOKE_FACT_REQUEST: &str = include_str!("../schemas/revoke_fact_request.schema.json");
pub const VERIFICATION_REPORT: &str = include_str!("../schemas/verification_report.schema.json");

/// File name and contents of every schema.
pub const ALL: [(&str, &str); 10] = [
    ("extractor_response.schema.json", EXTRACTOR_RESPONSE),
    ("obfuscator_request.schema.json", OBFUSCATOR_REQUEST),
    ("obfuscator_response.schema.json", OBFUSCATOR_RESPONSE),
    ("deobfuscator_request.schema.json", DEOBFUSCATOR_REQUEST),
    ("upload_request.schema.json", UPLOAD_REQUEST),
    ("share_request.schema.json", SHARE_REQUEST),
    ("share_link.schema.json", SHARE_LINK),
    ("notary_decision.schema.json", NOTARY_DECISION),
    ("revoke_fact_request.schema.json", REVOKE_FACT_REQUEST),
    ("verification_report.schema.json", VERIFICATION_REPORT),
];
