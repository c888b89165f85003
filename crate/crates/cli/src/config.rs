//! Flat `key = value` phantom configuration files.

use std::fmt::Write as _;

use anyhow::{anyhow, bail, Context, Result};
use ijvtrack::{PhantomConfig, Shadow};

/// Parses a config file body. Unknown keys are rejected; missing keys keep
/// their defaults. `#` starts a comment.
pub fn parse_config(text: &str) -> Result<PhantomConfig> {
    let mut c = PhantomConfig::default();
    let mut shadow: [Option<f64>; 3] = [None; 3];
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| anyhow!("line {}: expected key=value, got '{raw}'", lineno + 1))?;
        let (key, value) = (key.trim(), value.trim());
        let ctx = || format!("line {}: bad value for '{key}'", lineno + 1);
        let f = || value.parse::<f64>().with_context(ctx);
        let n = || value.parse::<usize>().with_context(ctx);
        match key {
            "width" => c.width = n()?,
            "height" => c.height = n()?,
            "frame_count" => c.frame_count = n()?,
            "fps" => c.fps = f()?,
            "center_x" => c.center.0 = f()?,
            "center_y" => c.center.1 = f()?,
            "semi_axis_a" => c.semi_axes.0 = f()?,
            "semi_axis_b" => c.semi_axes.1 = f()?,
            "pulsation" => c.pulsation = f()?,
            "pulsation_hz" => c.pulsation_hz = f()?,
            "drift_x" => c.drift.0 = f()?,
            "drift_y" => c.drift.1 = f()?,
            "interior_level" => c.interior_level = f()?,
            "wall_level" => c.wall_level = f()?,
            "background_level" => c.background_level = f()?,
            "wall_thickness" => c.wall_thickness = f()?,
            "speckle_sigma" => c.speckle_sigma = f()?,
            "shadow_start" => shadow[0] = Some(f()?),
            "shadow_extent" => shadow[1] = Some(f()?),
            "shadow_attenuation" => shadow[2] = Some(f()?),
            "contour_points" => c.contour_points = n()?,
            "seed" => c.seed = value.parse::<u64>().with_context(ctx)?,
            other => bail!("line {}: unknown key '{other}'", lineno + 1),
        }
    }
    c.shadow = match shadow {
        [None, None, None] => None,
        [Some(angle_start), Some(angle_extent), Some(attenuation)] => Some(Shadow {
            angle_start,
            angle_extent,
            attenuation,
        }),
        _ => bail!("shadow_start, shadow_extent and shadow_attenuation must be given together"),
    };
    Ok(c)
}

/// Inverse of [`parse_config`]; every field is written explicitly.
pub fn format_config(c: &PhantomConfig) -> String {
    let mut s = String::new();
    let mut kv = |k: &str, v: String| {
        let _ = writeln!(s, "{k} = {v}");
    };
    kv("width", c.width.to_string());
    kv("height", c.height.to_string());
    kv("frame_count", c.frame_count.to_string());
    kv("fps", c.fps.to_string());
    kv("center_x", c.center.0.to_string());
    kv("center_y", c.center.1.to_string());
    kv("semi_axis_a", c.semi_axes.0.to_string());
    kv("semi_axis_b", c.semi_axes.1.to_string());
    kv("pulsation", c.pulsation.to_string());
    kv("pulsation_hz", c.pulsation_hz.to_string());
    kv("drift_x", c.drift.0.to_string());
    kv("drift_y", c.drift.1.to_string());
    kv("interior_level", c.interior_level.to_string());
    kv("wall_level", c.wall_level.to_string());
    kv("background_level", c.background_level.to_string());
    kv("wall_thickness", c.wall_thickness.to_string());
    kv("speckle_sigma", c.speckle_sigma.to_string());
    if let Some(sh) = &c.shadow {
        kv("shadow_start", sh.angle_start.to_string());
        kv("shadow_extent", sh.angle_extent.to_string());
        kv("shadow_attenuation", sh.attenuation.to_string());
    }
    kv("contour_points", c.contour_points.to_string());
    kv("seed", c.seed.to_string());
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let mut c = PhantomConfig {
            frame_count: 12,
            drift: (0.25, -0.5),
            seed: 99,
            ..PhantomConfig::default()
        };
        assert_eq!(parse_config(&format_config(&c)).unwrap(), c);
        c.shadow = Some(Shadow {
            angle_start: 1.0,
            angle_extent: 0.5,
            attenuation: 0.7,
        });
        assert_eq!(parse_config(&format_config(&c)).unwrap(), c);
    }

    #[test]
    fn comments_and_defaults() {
        let c = parse_config("# test\n\nframe_count = 3 # short\n").unwrap();
        assert_eq!(c.frame_count, 3);
        assert_eq!(c.width, PhantomConfig::default().width);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(parse_config("colour = red").is_err());
        assert!(parse_config("width = wide").is_err());
        assert!(parse_config("width").is_err());
        assert!(parse_config("shadow_start = 1").is_err());
    }
}
