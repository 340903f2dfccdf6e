use std::fmt;

use crate::error::{Error, Result};
use crate::media::{Resolution, Tier};

/// The network configuration fields carried by a run's output name, e.g.
/// `s01_1080p_HQ_plr0.5_del0_jit0_bwNA_lat200`.
#[derive(Debug, Clone, PartialEq)]
pub struct RunName {
    pub source_id: String,
    pub resolution: Resolution,
    pub tier: Tier,
    pub plr: f64,
    /// ms
    pub delay: f64,
    /// ms
    pub jitter: f64,
    /// kbit/s, `None` for an unshaped link
    pub bandwidth: Option<f64>,
    /// ms
    pub latency: u32,
}

fn check_source_id(id: &str) -> Result<()> {
    if id.is_empty() || !id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-') {
        return Err(Error::Parse {
            token: id.to_string(),
            reason: "source id must be ASCII alphanumerics or '-'".into(),
        });
    }
    Ok(())
}

fn check_number(name: &str, v: f64, positive: bool) -> Result<()> {
    let ok = v.is_finite() && if positive { v > 0.0 } else { v >= 0.0 };
    if !ok {
        return Err(Error::config(format!("{name} value {v} cannot be encoded in a run name")));
    }
    Ok(())
}

impl RunName {
    fn validate(&self) -> Result<()> {
        check_source_id(&self.source_id).map_err(|e| Error::config(e.to_string()))?;
        check_number("plr", self.plr, false)?;
        check_number("delay", self.delay, false)?;
        check_number("jitter", self.jitter, false)?;
        if let Some(bw) = self.bandwidth {
            check_number("bandwidth", bw, true)?;
        }
        Ok(())
    }
}

// Rust's float Display is locale independent, never uses an exponent and
// prints the shortest digits that parse back to the same value.
impl fmt::Display for RunName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}_{}_{}_plr{}_del{}_jit{}_bw",
            self.source_id, self.resolution, self.tier, self.plr, self.delay, self.jitter
        )?;
        match self.bandwidth {
            Some(bw) => write!(f, "{bw}")?,
            None => f.write_str("NA")?,
        }
        write!(f, "_lat{}", self.latency)
    }
}

pub fn encode_filename(name: &RunName) -> Result<String> {
    name.validate()?;
    Ok(name.to_string())
}

fn parse_err(token: &str, reason: impl Into<String>) -> Error {
    Error::Parse {
        token: token.to_string(),
        reason: reason.into(),
    }
}

fn prefixed<'a>(token: &'a str, prefix: &str) -> Result<&'a str> {
    token
        .strip_prefix(prefix)
        .ok_or_else(|| parse_err(token, format!("expected `{prefix}` prefix")))
}

fn number(token: &str, digits: &str, positive: bool) -> Result<f64> {
    // Only plain decimal notation is produced by the encoder.
    let plain = !digits.is_empty()
        && digits.chars().all(|c| c.is_ascii_digit() || c == '.')
        && digits.chars().filter(|&c| c == '.').count() <= 1
        && !digits.starts_with('.')
        && !digits.ends_with('.');
    if !plain {
        return Err(parse_err(token, "expected a decimal number"));
    }
    let v: f64 = digits.parse().map_err(|_| parse_err(token, "expected a decimal number"))?;
    if !v.is_finite() || (positive && v <= 0.0) {
        return Err(parse_err(token, "number out of range"));
    }
    Ok(v)
}

pub fn decode_filename(s: &str) -> Result<RunName> {
    let tokens: Vec<&str> = s.split('_').collect();
    if tokens.len() != 8 {
        return Err(parse_err(
            s,
            format!("expected 8 `_`-separated fields, found {}", tokens.len()),
        ));
    }
    check_source_id(tokens[0])?;
    let resolution = tokens[1]
        .parse::<Resolution>()
        .map_err(|_| parse_err(tokens[1], "unknown resolution"))?;
    let tier = tokens[2].parse::<Tier>().map_err(|_| parse_err(tokens[2], "unknown tier"))?;
    let plr = number(tokens[3], prefixed(tokens[3], "plr")?, false)?;
    if plr > 100.0 {
        return Err(parse_err(tokens[3], "loss rate above 100%"));
    }
    let delay = number(tokens[4], prefixed(tokens[4], "del")?, false)?;
    let jitter = number(tokens[5], prefixed(tokens[5], "jit")?, false)?;
    let bw = prefixed(tokens[6], "bw")?;
    let bandwidth = match bw {
        "NA" => None,
        digits => Some(number(tokens[6], digits, true)?),
    };
    let lat = prefixed(tokens[7], "lat")?;
    if lat.is_empty() || !lat.chars().all(|c| c.is_ascii_digit()) || (lat.len() > 1 && lat.starts_with('0')) {
        return Err(parse_err(tokens[7], "expected an integer number of ms"));
    }
    let latency = lat.parse().map_err(|_| parse_err(tokens[7], "latency out of range"))?;
    Ok(RunName {
        source_id: tokens[0].to_string(),
        resolution,
        tier,
        plr,
        delay,
        jitter,
        bandwidth,
        latency,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn example() -> RunName {
        RunName {
            source_id: "s01".into(),
            resolution: Resolution::R1080p,
            tier: Tier::HQ,
            plr: 0.5,
            delay: 0.0,
            jitter: 0.0,
            bandwidth: None,
            latency: 200,
        }
    }

    #[test]
    fn encodes_the_naming_convention() {
        assert_eq!(encode_filename(&example()).unwrap(), "s01_1080p_HQ_plr0.5_del0_jit0_bwNA_lat200");
        let shaped = RunName {
            bandwidth: Some(1500.0),
            delay: 12.25,
            ..example()
        };
        assert_eq!(shaped.to_string(), "s01_1080p_HQ_plr0.5_del12.25_jit0_bw1500_lat200");
    }

    #[test]
    fn garbage_names_the_offending_token() {
        match decode_filename("garbage").unwrap_err() {
            Error::Parse { token, .. } => assert_eq!(token, "garbage"),
            e => panic!("{e:?}"),
        }
        let cases = [
            ("s01_1080p_HQ_plr0.5_del0_jitX_bwNA_lat200", "jitX"),
            ("s01_480p_HQ_plr0.5_del0_jit0_bwNA_lat200", "480p"),
            ("s01_1080p_HQ_loss0.5_del0_jit0_bwNA_lat200", "loss0.5"),
            ("s01_1080p_HQ_plr0.5_del0_jit0_bw0_lat200", "bw0"),
            ("s01_1080p_HQ_plr0.5_del0_jit0_bwNA_lat2e2", "lat2e2"),
            ("s01_1080p_HQ_plr1e-3_del0_jit0_bwNA_lat200", "plr1e-3"),
            ("s01_1080p_HQ_plr101_del0_jit0_bwNA_lat200", "plr101"),
            ("s01_1080p_MQ_plr0.5_del-1_jit0_bwNA_lat200", "del-1"),
        ];
        for (name, bad) in cases {
            match decode_filename(name) {
                Err(Error::Parse { token, .. }) => assert_eq!(token, bad, "{name}"),
                other => panic!("{name}: {other:?}"),
            }
        }
    }

    #[test]
    fn invalid_values_are_not_encodable() {
        assert!(encode_filename(&RunName { plr: f64::NAN, ..example() }).is_err());
        assert!(encode_filename(&RunName { source_id: "a_b".into(), ..example() }).is_err());
        assert!(encode_filename(&RunName { bandwidth: Some(0.0), ..example() }).is_err());
    }

    pub(crate) fn arb_name() -> impl Strategy<Value = RunName> {
        let number = prop_oneof![
            Just(0.0),
            (0u32..10_000).prop_map(f64::from),
            (0u32..100_000).prop_map(|v| f64::from(v) / 1000.0),
            (0.0f64..1e6),
        ];
        (
            "[a-z0-9][a-z0-9-]{0,7}",
            prop_oneof![Just(Resolution::R720p), Just(Resolution::R1080p)],
            prop_oneof![Just(Tier::HQ), Just(Tier::MQ), Just(Tier::LQ)],
            (0.0f64..=100.0),
            number.clone(),
            number,
            proptest::option::of(1e-3f64..1e6),
            any::<u32>(),
        )
            .prop_map(|(source_id, resolution, tier, plr, delay, jitter, bandwidth, latency)| RunName {
                source_id,
                resolution,
                tier,
                plr,
                delay,
                jitter,
                bandwidth,
                latency,
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn decode_inverts_encode(name in arb_name()) {
            let s = encode_filename(&name).unwrap();
            let back = decode_filename(&s).unwrap();
            prop_assert_eq!(&back, &name);
            prop_assert_eq!(back.to_string(), s);
        }
    }
}
