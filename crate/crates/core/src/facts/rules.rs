//! Rule evaluation: extracted fields in, fact drafts out.

use std::collections::BTreeMap;

use chrono::{DateTime, Datelike, NaiveDate, NaiveTime, TimeZone, Utc};
use serde::{Deserialize, Serialize};

use super::{cnp, FactError};

pub const OVER_18: &str = "over_18";
pub const DOCUMENT_VALID: &str = "document_valid";
pub const IS_STUDENT: &str = "is_student";
pub const NAME_MATCHES: &str = "name_matches";
pub const DOMICILE_RO: &str = "domicile_ro";

/// Parses `dd/mm/yyyy`, `dd.mm.yyyy` or `yyyy-mm-dd`.
pub fn parse_date(text: &str) -> Result<NaiveDate, FactError> {
    let t = text.trim();
    for fmt in ["%d/%m/%Y", "%d.%m.%Y", "%Y-%m-%d"] {
        if let Ok(d) = NaiveDate::parse_from_str(t, fmt) {
            return Ok(d);
        }
    }
    Err(FactError::Malformed(format!("unrecognized date {t:?}")))
}

/// Parses `start-end` where both ends use [`parse_date`] formats. ISO dates
/// contain dashes themselves, so the split point is searched.
pub fn parse_date_range(text: &str) -> Result<(NaiveDate, NaiveDate), FactError> {
    let t = text.trim();
    for (i, _) in t.match_indices('-') {
        if let (Ok(a), Ok(b)) = (parse_date(&t[..i]), parse_date(&t[i + 1..])) {
            return Ok((a, b));
        }
    }
    Err(FactError::Malformed(format!("unrecognized date range {t:?}")))
}

/// The date someone born on `birth` turns `years` old. A 29 February
/// birthday falls on 1 March in non-leap years.
pub fn anniversary(birth: NaiveDate, years: i32) -> NaiveDate {
    let y = birth.year() + years;
    birth
        .with_year(y)
        .unwrap_or_else(|| NaiveDate::from_ymd_opt(y, 3, 1).expect("1 March exists"))
}

/// Adult on or after the 18th birthday, evaluated on the UTC calendar date.
pub fn is_adult(birth: NaiveDate, today: NaiveDate) -> bool {
    today >= anniversary(birth, 18)
}

fn end_of_day(d: NaiveDate) -> DateTime<Utc> {
    Utc.from_utc_datetime(&d.and_time(NaiveTime::from_hms_opt(23, 59, 59).expect("valid time")))
}

const ROMANIAN_PLACES: &[&str] = &[
    "ROMANIA", "RO", "ROU", "ALBA", "ARAD", "ARGES", "BACAU", "BIHOR", "BISTRITA", "BOTOSANI", "BRAILA",
    "BRASOV", "BUCURESTI", "BUZAU", "CALARASI", "CARAS", "CLUJ", "CLUJ-NAPOCA", "CONSTANTA", "COVASNA",
    "DAMBOVITA", "DOLJ", "GALATI", "GIURGIU", "GORJ", "HARGHITA", "HUNEDOARA", "IALOMITA", "IASI", "ILFOV",
    "MARAMURES", "MEHEDINTI", "MURES", "NEAMT", "OLT", "ORADEA", "PRAHOVA", "SALAJ", "SATU MARE", "SIBIU",
    "SUCEAVA", "TELEORMAN", "TIMIS", "TIMISOARA", "TULCEA", "VALCEA", "VASLUI", "VRANCEA",
];

/// True when the last comma-separated part of `address` names Romania or a
/// Romanian county or county seat.
pub fn address_in_romania(address: &str) -> bool {
    let last = address.rsplit(',').next().unwrap_or("").trim().to_uppercase();
    !last.is_empty() && ROMANIAN_PLACES.contains(&last.as_str())
}

fn normalize_name(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ").to_uppercase()
}

/// Which predicates to evaluate.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RuleSet {
    #[serde(default)]
    pub over_18: bool,
    #[serde(default)]
    pub document_valid: bool,
    #[serde(default)]
    pub is_student: bool,
    /// Reference name for `name_matches`; the rule is off when absent.
    #[serde(default)]
    pub name_reference: Option<String>,
    #[serde(default)]
    pub domicile_ro: bool,
}

impl RuleSet {
    pub fn all(name_reference: Option<&str>) -> Self {
        Self {
            over_18: true,
            document_valid: true,
            is_student: true,
            name_reference: name_reference.map(str::to_string),
            domicile_ro: true,
        }
    }
}

/// A fact awaiting notary approval and signing. Holds no field values.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactDraft {
    pub subject: String,
    pub predicate: String,
    pub source_document: String,
    pub expires_at: Option<DateTime<Utc>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostic {
    pub predicate: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Derivation {
    pub drafts: Vec<FactDraft>,
    pub diagnostics: Vec<Diagnostic>,
}

/// Evaluates `rules` over extracted `fields` (name → text). Only rules whose
/// premise holds yield a draft; a malformed input skips that rule alone.
pub fn derive_facts(
    subject: &str,
    source_document: &str,
    fields: &BTreeMap<String, String>,
    rules: &RuleSet,
    now: DateTime<Utc>,
) -> Derivation {
    let mut out = Derivation::default();
    let today = now.date_naive();
    let emit = |out: &mut Derivation, predicate: &str, expires_at: Option<DateTime<Utc>>| {
        out.drafts.push(FactDraft {
            subject: subject.to_string(),
            predicate: predicate.to_string(),
            source_document: source_document.to_string(),
            expires_at,
        });
    };
    let diag = |out: &mut Derivation, predicate: &str, message: String| {
        out.diagnostics.push(Diagnostic {
            predicate: predicate.to_string(),
            message,
        });
    };
    let get = |k: &str| fields.get(k).map(String::as_str);

    if rules.over_18 {
        let birth = match (get("birthdate"), get("cnp")) {
            (Some(b), _) => parse_date(b),
            (None, Some(c)) => cnp::decode(c).map(|d| d.birthdate),
            (None, None) => Err(FactError::Malformed("no birthdate or cnp field".into())),
        };
        match birth {
            Ok(b) if is_adult(b, today) => emit(&mut out, OVER_18, None),
            Ok(_) => {}
            Err(e) => diag(&mut out, OVER_18, e.to_string()),
        }
    }

    let validity = get("validity").map(parse_date_range);
    if rules.document_valid {
        match &validity {
            Some(Ok((from, to))) if *from <= today && today <= *to => {
                emit(&mut out, DOCUMENT_VALID, Some(end_of_day(*to)))
            }
            Some(Ok(_)) => {}
            Some(Err(e)) => diag(&mut out, DOCUMENT_VALID, e.to_string()),
            None => diag(&mut out, DOCUMENT_VALID, "no validity field".into()),
        }
    }

    if rules.is_student {
        match get("status") {
            Some(s) if s.trim().eq_ignore_ascii_case("ACTIVE") => {
                let expiry = match &validity {
                    Some(Ok((_, to))) => Some(end_of_day(*to)),
                    _ => None,
                };
                emit(&mut out, IS_STUDENT, expiry)
            }
            Some(_) => {}
            None => diag(&mut out, IS_STUDENT, "no status field".into()),
        }
    }

    if let Some(reference) = &rules.name_reference {
        let want = normalize_name(reference);
        let full = match (get("surname"), get("given_name"), get("name")) {
            (Some(s), Some(g), _) => Some((normalize_name(&format!("{s} {g}")), normalize_name(&format!("{g} {s}")))),
            (_, _, Some(n)) => Some((normalize_name(n), normalize_name(n))),
            _ => None,
        };
        match full {
            Some((a, b)) if a == want || b == want => emit(&mut out, NAME_MATCHES, None),
            Some(_) => {}
            None => diag(&mut out, NAME_MATCHES, "no name fields".into()),
        }
    }

    if rules.domicile_ro {
        match get("address") {
            Some(a) if address_in_romania(a) => emit(&mut out, DOMICILE_RO, None),
            Some(_) => {}
            None => diag(&mut out, DOMICILE_RO, "no address field".into()),
        }
    }
    out
}
