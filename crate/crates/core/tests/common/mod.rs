//! Test oracles and generators shared by the integration tests and the
//! acceptance suite. Every oracle here is written independently of the
//! library code it checks.
#![allow(dead_code)]

pub mod checks;

use std::collections::BTreeMap;

use cosim::sensors::{Cone, ConeColor};
use cosim::wire::MessageEnvelope;
use proptest::prelude::*;
use serde_json::{Map, Number, Value};

// ---------------------------------------------------------------------------
// Canonical JSON

fn oracle_string(s: &str, out: &mut String) {
    out.push('"');
    for ch in s.chars() {
        match ch {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\u{08}' => out.push_str("\\b"),
            '\u{09}' => out.push_str("\\t"),
            '\u{0a}' => out.push_str("\\n"),
            '\u{0c}' => out.push_str("\\f"),
            '\u{0d}' => out.push_str("\\r"),
            c if (c as u32) < 0x20 => out.push_str(&format!("\\u{:04x}", c as u32)),
            c => out.push(c),
        }
    }
    out.push('"');
}

/// Shortest round-trip float text: digits come from core's `{:e}`
/// formatting, layout follows the documented canonical rules (exponent always
/// signed).
pub fn oracle_float(x: f64) -> String {
    assert!(x.is_finite());
    if x == 0.0 {
        return if x.is_sign_negative() { "-0.0".into() } else { "0.0".into() };
    }
    let sci = format!("{:e}", x.abs());
    let (mant, exp) = sci.split_once('e').unwrap();
    let digits: String = mant.chars().filter(|c| *c != '.').collect();
    let n = digits.len() as i64;
    let k = exp.parse::<i64>().unwrap() + 1;
    let body = if n <= k && k <= 16 {
        format!("{digits}{}.0", "0".repeat((k - n) as usize))
    } else if 0 < k && k <= 16 {
        format!("{}.{}", &digits[..k as usize], &digits[k as usize..])
    } else if -5 < k && k <= 0 {
        format!("0.{}{digits}", "0".repeat((-k) as usize))
    } else {
        let e = k - 1;
        let exp = if e < 0 { format!("e-{}", -e) } else { format!("e+{e}") };
        if n == 1 {
            format!("{digits}{exp}")
        } else {
            format!("{}.{}{exp}", &digits[..1], &digits[1..])
        }
    };
    if x < 0.0 {
        format!("-{body}")
    } else {
        body
    }
}

fn oracle_number(n: &Number, out: &mut String) {
    if let Some(u) = n.as_u64() {
        out.push_str(&u.to_string());
    } else if let Some(i) = n.as_i64() {
        out.push_str(&i.to_string());
    } else {
        out.push_str(&oracle_float(n.as_f64().unwrap()));
    }
}

fn oracle_value(v: &Value, out: &mut String) {
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => oracle_number(n, out),
        Value::String(s) => oracle_string(s, out),
        Value::Array(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                oracle_value(item, out);
            }
            out.push(']');
        }
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort_by(|a, b| a.as_bytes().cmp(b.as_bytes()));
            out.push('{');
            for (i, k) in keys.into_iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                oracle_string(k, out);
                out.push(':');
                oracle_value(&map[k], out);
            }
            out.push('}');
        }
    }
}

pub fn oracle_canonical_json(v: &Value) -> String {
    let mut out = String::new();
    oracle_value(v, &mut out);
    out
}

/// Expected frame bytes for an envelope, built without the library.
pub fn oracle_frame(env: &MessageEnvelope) -> Vec<u8> {
    let mut obj = Map::new();
    obj.insert("topic".into(), Value::String(env.topic.clone()));
    obj.insert("msg_type".into(), Value::String(env.msg_type.clone()));
    obj.insert("sequence".into(), Value::from(env.sequence));
    obj.insert("sim_time".into(), Number::from_f64(env.sim_time).map(Value::Number).unwrap());
    obj.insert("payload".into(), env.payload.clone());
    let body = oracle_canonical_json(&Value::Object(obj));
    let mut frame = (body.len() as u32).to_be_bytes().to_vec();
    frame.extend_from_slice(body.as_bytes());
    frame
}

// ---------------------------------------------------------------------------
// Geometry and numerics

/// Algebraic (Kasa) circle fit: least squares on x² + y² + D·x + E·y + F = 0,
/// solved by Cramer's rule on centred data. Returns (cx, cy, r).
pub fn kasa_circle_fit(points: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy, mut sx, mut sy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    let (mut bx, mut by, mut b1) = (0.0, 0.0, 0.0);
    for &(x, y) in points {
        let (x, y) = (x - mx, y - my);
        let z = -(x * x + y * y);
        sxx += x * x;
        sxy += x * y;
        syy += y * y;
        sx += x;
        sy += y;
        bx += x * z;
        by += y * z;
        b1 += z;
    }
    let m = [[sxx, sxy, sx], [sxy, syy, sy], [sx, sy, n]];
    let b = [bx, by, b1];
    let det3 = |a: [[f64; 3]; 3]| {
        a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1]) - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
            + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])
    };
    let d = det3(m);
    let solve = |col: usize| {
        let mut a = m;
        for r in 0..3 {
            a[r][col] = b[r];
        }
        det3(a) / d
    };
    let (dd, ee, ff) = (solve(0), solve(1), solve(2));
    let (cx, cy) = (-dd / 2.0, -ee / 2.0);
    let r = (cx * cx + cy * cy - ff).sqrt();
    (cx + mx, cy + my, r)
}

/// Root of a continuous function with a sign change on [lo, hi].
pub fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let f_lo = f(lo);
    assert!(f_lo * f(hi) <= 0.0, "no sign change");
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if (f(mid) > 0.0) == (f_lo > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Image row of a ground point `range_m` ahead of a level pinhole camera.
pub fn pinhole_ground_row(fy: f64, cy: f64, mount_height_m: f64, range_m: f64) -> f64 {
    cy + fy * mount_height_m / range_m
}

// ---------------------------------------------------------------------------
// Courses

pub fn straight_corridor(pairs: usize, spacing_m: f64, halfwidth_m: f64) -> Vec<Cone> {
    (0..pairs)
        .flat_map(|i| {
            let x = spacing_m * (i + 1) as f64;
            [
                Cone::new(x, halfwidth_m, ConeColor::Red),
                Cone::new(x, -halfwidth_m, ConeColor::Green),
            ]
        })
        .collect()
}

/// Scenario override text that replaces the course.
pub fn course_yaml(cones: &[Cone], finish_pair: Option<usize>) -> String {
    let mut s = String::from("course:\n");
    for c in cones {
        let color = match c.color {
            ConeColor::Red => "red",
            ConeColor::Green => "green",
        };
        s.push_str(&format!("  - {{x_m: {:?}, y_m: {:?}, color: {color}}}\n", c.x_m, c.y_m));
    }
    match finish_pair {
        Some(i) => s.push_str(&format!("finish_pair: {i}\n")),
        None => s.push_str("finish_pair: null\n"),
    }
    s
}

// ---------------------------------------------------------------------------
// Generators

fn arb_scalar() -> impl Strategy<Value = Value> {
    prop_oneof![
        Just(Value::Null),
        any::<bool>().prop_map(Value::Bool),
        any::<u64>().prop_map(Value::from),
        any::<i64>().prop_map(Value::from),
        any::<f64>()
            .prop_filter("finite", |f| f.is_finite())
            .prop_map(|f| Value::Number(Number::from_f64(f).unwrap())),
        any::<String>().prop_map(Value::String),
    ]
}

/// Arbitrary JSON, including unicode strings, with nesting well below the
/// explicit deep-chain generator.
pub fn arb_json() -> impl Strategy<Value = Value> {
    arb_scalar().prop_recursive(6, 64, 5, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 0..5).prop_map(Value::Array),
            prop::collection::btree_map(any::<String>(), inner, 0..5)
                .prop_map(|m| Value::Object(m.into_iter().collect())),
        ]
    })
}

/// A chain of single-key objects and arrays exactly `depth` levels deep.
pub fn arb_deep_json(max_depth: usize) -> impl Strategy<Value = Value> {
    (1..=max_depth, prop::collection::vec(any::<bool>(), max_depth), arb_scalar()).prop_map(|(depth, kinds, leaf)| {
        let mut v = leaf;
        for &as_array in kinds.iter().take(depth) {
            v = if as_array {
                Value::Array(vec![v])
            } else {
                let mut m = Map::new();
                m.insert("k".into(), v);
                Value::Object(m)
            };
        }
        v
    })
}

pub fn arb_name() -> impl Strategy<Value = String> {
    "[^\\p{Cc}]{1,24}"
}

pub fn arb_envelope() -> impl Strategy<Value = MessageEnvelope> {
    (
        arb_name(),
        arb_name(),
        any::<u64>(),
        0.0f64..1.0e9,
        prop_oneof![arb_json(), arb_deep_json(32)],
    )
        .prop_map(|(topic, msg_type, seq, t, payload)| MessageEnvelope::new(topic, msg_type, seq, t, payload))
}

/// Map-only configuration trees whose shape is consistent across draws:
/// keys `a`..`c` always hold maps, keys `v`..`z` always hold scalars or
/// sequences, so any two trees agree on which paths are maps.
pub fn arb_config_tree() -> impl Strategy<Value = Value> {
    fn level(depth: u32) -> BoxedStrategy<Value> {
        let leaf = prop_oneof![
            Just(Value::Null),
            any::<bool>().prop_map(Value::Bool),
            (-1000i64..1000).prop_map(Value::from),
            "[a-z]{0,6}".prop_map(Value::String),
            prop::collection::vec((-9i64..9).prop_map(Value::from), 0..4).prop_map(Value::Array),
        ];
        let leaves = prop::collection::btree_map(prop::sample::select(vec!["v", "w", "x", "y", "z"]), leaf, 0..4);
        if depth == 0 {
            return leaves
                .prop_map(|m| Value::Object(m.into_iter().map(|(k, v)| (k.to_owned(), v)).collect()))
                .boxed();
        }
        let children = prop::collection::btree_map(prop::sample::select(vec!["a", "b", "c"]), level(depth - 1), 0..3);
        (leaves, children)
            .prop_map(|(l, c)| {
                let mut m: BTreeMap<String, Value> = l.into_iter().map(|(k, v)| (k.to_owned(), v)).collect();
                m.extend(c.into_iter().map(|(k, v)| (k.to_owned(), v)));
                Value::Object(m.into_iter().collect())
            })
            .boxed()
    }
    level(3)
}

/// Every leaf path of a tree with its value; maps are not leaves.
pub fn leaf_paths(v: &Value) -> Vec<(Vec<String>, Value)> {
    fn walk(v: &Value, path: &mut Vec<String>, out: &mut Vec<(Vec<String>, Value)>) {
        match v {
            Value::Object(m) => {
                for (k, child) in m {
                    path.push(k.clone());
                    walk(child, path, out);
                    path.pop();
                }
            }
            other => out.push((path.clone(), other.clone())),
        }
    }
    let mut out = Vec::new();
    walk(v, &mut Vec::new(), &mut out);
    out
}

pub fn lookup<'a>(v: &'a Value, path: &[String]) -> Option<&'a Value> {
    path.iter().try_fold(v, |node, k| node.get(k))
}

/// Random cone estimates in front of the vehicle with both labels.
pub fn arb_cone_estimates() -> impl Strategy<Value = Vec<cosim::autonomy::ConeEstimate>> {
    prop::collection::vec(
        (0.3f64..8.0, -3.0f64..3.0, any::<bool>()).prop_map(|(x, y, red)| cosim::autonomy::ConeEstimate {
            x_m: x,
            y_m: y,
            label: if red { ConeColor::Red } else { ConeColor::Green },
        }),
        0..12,
    )
}
