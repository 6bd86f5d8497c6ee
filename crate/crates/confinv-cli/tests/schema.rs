use confinv::identities::{run_suite, Category};
use confinv_cli::config::{resolve, Command, FileConfig};
use confinv_cli::store::RunRecord;
use serde_json::Value;

fn schema() -> Value {
    serde_json::from_str(include_str!("../schema.json")).unwrap()
}

/// Enough of JSON Schema for the subset used in schema.json.
fn check(root: &Value, s: &Value, v: &Value, path: &str, errs: &mut Vec<String>) {
    if let Some(r) = s.get("$ref").and_then(Value::as_str) {
        let name = r.trim_start_matches("#/$defs/");
        return check(root, &root["$defs"][name], v, path, errs);
    }
    if let Some(e) = s.get("enum").and_then(Value::as_array) {
        if !e.contains(v) {
            errs.push(format!("{path}: {v} not in enum"));
        }
    }
    if let Some(t) = s.get("type") {
        let types: Vec<&str> = match t {
            Value::String(x) => vec![x.as_str()],
            Value::Array(xs) => xs.iter().filter_map(Value::as_str).collect(),
            _ => vec![],
        };
        let ok = types.iter().any(|t| match *t {
            "object" => v.is_object(),
            "array" => v.is_array(),
            "string" => v.is_string(),
            "number" => v.is_number(),
            "integer" => v.is_u64() || v.is_i64(),
            "boolean" => v.is_boolean(),
            "null" => v.is_null(),
            _ => false,
        });
        if !ok {
            errs.push(format!("{path}: {v} is not {types:?}"));
            return;
        }
    }
    if let (Some(obj), Some(props)) = (v.as_object(), s.get("properties").and_then(Value::as_object)) {
        for req in s.get("required").and_then(Value::as_array).into_iter().flatten() {
            if !obj.contains_key(req.as_str().unwrap()) {
                errs.push(format!("{path}: missing {req}"));
            }
        }
        for (k, x) in obj {
            match props.get(k) {
                Some(ps) => check(root, ps, x, &format!("{path}.{k}"), errs),
                None => errs.push(format!("{path}: undocumented key {k}")),
            }
        }
    }
    if let (Some(items), Some(arr)) = (s.get("items"), v.as_array()) {
        for (i, x) in arr.iter().enumerate() {
            check(root, items, x, &format!("{path}[{i}]"), errs);
        }
    }
}

fn assert_valid(def: &str, v: &Value) {
    let root = schema();
    let mut errs = Vec::new();
    check(&root, &root["$defs"][def], v, def, &mut errs);
    assert!(errs.is_empty(), "{}", errs.join("\n"));
}

fn small_run() -> RunRecord {
    let file = FileConfig { surfaces: Some(vec!["sphere:1".into()]), grid: Some(6), samples: Some(4), frames: Some(1), points: Some(4), ..Default::default() };
    let r = resolve(Command::Verify, file).unwrap();
    let mut cfg = r.suite_config();
    cfg.categories = vec![Category::Pointwise, Category::Integral, Category::Noether, Category::Exterior];
    RunRecord::new(r.settings.clone(), run_suite(&cfg))
}

#[test]
fn report_and_record_match_the_schema() {
    let rec = small_run();
    assert_valid("report", &serde_json::to_value(&rec.report).unwrap());
    assert_valid("run_record", &serde_json::to_value(&rec).unwrap());
}

#[test]
fn config_schema_lists_exactly_the_accepted_keys() {
    let root = schema();
    let documented: Vec<&String> = root["$defs"]["config_file"]["properties"].as_object().unwrap().keys().collect();
    let accepted = serde_json::to_value(FileConfig::default()).unwrap();
    let accepted: Vec<&String> = accepted.as_object().unwrap().keys().collect();
    let mut d = documented.clone();
    let mut a = accepted.clone();
    d.sort();
    a.sort();
    assert_eq!(d, a);
    for k in a {
        assert!(confinv_cli::CONFIG_HELP.contains(k.as_str()), "{k} missing from help");
    }
}
