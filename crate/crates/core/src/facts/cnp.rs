//! Romanian personal numeric code (CNP): `S YY MM DD JJ NNN C`.

use chrono::NaiveDate;

use super::FactError;

/// Checksum weights applied to the first twelve digits.
pub const WEIGHTS: [u32; 12] = [2, 7, 9, 1, 4, 6, 3, 5, 8, 2, 7, 9];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sex {
    Male,
    Female,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecodedCnp {
    pub sex: Sex,
    pub birthdate: NaiveDate,
    pub county: u8,
    pub serial: u16,
}

fn digits(cnp: &str) -> Result<[u32; 13], FactError> {
    let bad = || FactError::Malformed(format!("CNP must be 13 digits, got {} chars", cnp.len()));
    if cnp.len() != 13 {
        return Err(bad());
    }
    let mut out = [0u32; 13];
    for (i, c) in cnp.chars().enumerate() {
        out[i] = c.to_digit(10).ok_or_else(bad)?;
    }
    Ok(out)
}

/// Check digit for the first twelve digits: weighted sum mod 11, with 10
/// mapped to 1.
pub fn check_digit(first12: &[u32]) -> u32 {
    let s: u32 = first12.iter().zip(WEIGHTS.iter()).map(|(d, w)| d * w).sum();
    match s % 11 {
        10 => 1,
        r => r,
    }
}

pub fn checksum_valid(cnp: &str) -> bool {
    digits(cnp).is_ok_and(|d| check_digit(&d[..12]) == d[12])
}

/// Validates the checksum and decodes sex and birthdate.
///
/// Century digits: 1/2 → 1900s, 3/4 → 1800s, 5/6 → 2000s. Other leading
/// digits (residents) carry no century and are rejected.
pub fn decode(cnp: &str) -> Result<DecodedCnp, FactError> {
    let d = digits(cnp)?;
    if check_digit(&d[..12]) != d[12] {
        return Err(FactError::Malformed("CNP checksum mismatch".into()));
    }
    let (century, sex) = match d[0] {
        1 => (1900, Sex::Male),
        2 => (1900, Sex::Female),
        3 => (1800, Sex::Male),
        4 => (1800, Sex::Female),
        5 => (2000, Sex::Male),
        6 => (2000, Sex::Female),
        s => {
            return Err(FactError::Malformed(format!(
                "CNP sex/century digit {s} has no birth century"
            )))
        }
    };
    let year = century + (d[1] * 10 + d[2]) as i32;
    let month = d[3] * 10 + d[4];
    let day = d[5] * 10 + d[6];
    let birthdate = NaiveDate::from_ymd_opt(year, month, day)
        .ok_or_else(|| FactError::Malformed("CNP encodes an invalid date".into()))?;
    Ok(DecodedCnp {
        sex,
        birthdate,
        county: (d[7] * 10 + d[8]) as u8,
        serial: (d[9] * 100 + d[10] * 10 + d[11]) as u16,
    })
}

/// Builds a valid CNP. Fails for birth years outside 1800–2099.
pub fn encode(sex: Sex, birthdate: NaiveDate, county: u8, serial: u16) -> Result<String, FactError> {
    use chrono::Datelike;
    let y = birthdate.year();
    let s = match (y / 100, sex) {
        (19, Sex::Male) => 1,
        (19, Sex::Female) => 2,
        (18, Sex::Male) => 3,
        (18, Sex::Female) => 4,
        (20, Sex::Male) => 5,
        (20, Sex::Female) => 6,
        _ => return Err(FactError::Malformed(format!("year {y} not encodable"))),
    };
    if county > 99 || serial > 999 {
        return Err(FactError::Malformed("county or serial out of range".into()));
    }
    let body = format!(
        "{s}{:02}{:02}{:02}{county:02}{serial:03}",
        y % 100,
        birthdate.month(),
        birthdate.day()
    );
    let d: Vec<u32> = body.chars().map(|c| c.to_digit(10).unwrap()).collect();
    Ok(format!("{body}{}", check_digit(&d)))
}
