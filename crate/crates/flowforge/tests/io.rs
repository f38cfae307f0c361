use std::io::Cursor;
use std::time::Instant;

use flowforge::csv_source::{parse_schema, read_csv, read_csv_from, BadRowPolicy, CsvError, CsvOptions};
use flowforge::envelope::{self, Payload};
use flowforge::fixture::{routes_csv, ROUTES_HEADER};
use flowforge::table_store::{TableStore, TableStoreError};
use flowforge::workload::derivative_workload;
use flowforge_core::{Dtype, Field, TableFrame, Value};
use proptest::prelude::*;

fn read(text: &str, options: &CsvOptions) -> Result<flowforge::csv_source::CsvRead, CsvError> {
    read_csv_from(Cursor::new(text.as_bytes().to_vec()), options)
}

#[test]
fn openflights_line_parses_to_nine_columns() {
    let text = format!("{ROUTES_HEADER}\nBA,1355,SIN,3316,LHR,507,,0,744\n");
    let r = read(&text, &CsvOptions::default()).unwrap();
    assert_eq!(r.frame.num_columns(), 9);
    assert_eq!(r.frame.field("stops").unwrap().dtype, Dtype::Int);
    let stops = r.frame.column_index("stops").unwrap();
    assert_eq!(r.frame.rows()[0][stops], Value::Int(0));
    assert_eq!(r.frame.rows()[0][6], Value::Str(String::new()));
}

#[test]
fn header_only_file_gives_empty_frame_with_schema() {
    let r = read("a,b\n", &CsvOptions::default()).unwrap();
    assert_eq!(r.frame.num_rows(), 0);
    assert_eq!(r.frame.schema().len(), 2);
}

#[test]
fn ragged_and_null_rows_are_skipped_and_counted() {
    let text = "a,b\n1,x\n2\n\\N,y\n3,z,extra\n4,w\n";
    let r = read(text, &CsvOptions::default()).unwrap();
    assert_eq!(r.frame.num_rows(), 2);
    assert_eq!(r.skipped, 3);
    let fail = CsvOptions { on_bad_row: BadRowPolicy::Fail, ..CsvOptions::default() };
    assert!(matches!(read(text, &fail), Err(CsvError::SchemaMismatch { record: 3, .. })));
}

#[test]
fn inference_promotes_int_to_float_to_string() {
    let r = read("i,f,s\n1,1,1\n2,2.5,x\n", &CsvOptions::default()).unwrap();
    let dtypes: Vec<Dtype> = r.frame.schema().iter().map(|f| f.dtype).collect();
    assert_eq!(dtypes, [Dtype::Int, Dtype::Float, Dtype::String]);
    assert_eq!(r.frame.rows()[0][1], Value::Float(1.0));
}

#[test]
fn explicit_schema_and_delimiter() {
    let schema = parse_schema("name:string, n:int, ok:bool").unwrap();
    let options = CsvOptions { delimiter: b';', schema: Some(schema), ..CsvOptions::default() };
    let r = read("name;n;ok\na;1;true\nb;x;false\n", &options).unwrap();
    assert_eq!(r.frame.num_rows(), 1);
    assert_eq!(r.skipped, 1);
    let bad_width = CsvOptions { schema: Some(parse_schema("a:int").unwrap()), ..CsvOptions::default() };
    assert!(matches!(read("a,b\n1,2\n", &bad_width), Err(CsvError::SchemaMismatch { record: 0, .. })));
    assert!(parse_schema("a:decimal").is_err());
}

#[test]
fn headerless_columns_are_numbered() {
    let options = CsvOptions { header: false, ..CsvOptions::default() };
    let r = read("1,a\n2,b\n", &options).unwrap();
    let names: Vec<&str> = r.frame.schema().iter().map(|f| f.name.as_str()).collect();
    assert_eq!(names, ["c0", "c1"]);
}

#[test]
fn missing_file_is_io_error() {
    let err = read_csv(std::path::Path::new("/definitely/not/here.csv"), &CsvOptions::default()).unwrap_err();
    assert!(matches!(err, CsvError::Io { .. }));
}

#[test]
fn bundled_fixture_matches_generator() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/routes_5000.csv");
    let bytes = std::fs::read_to_string(path).unwrap();
    assert_eq!(bytes, routes_csv(5000, 42));
    let r = read(&bytes, &CsvOptions::default()).unwrap();
    assert_eq!((r.frame.num_rows(), r.skipped), (5000, 0));
}

#[test]
fn filter_count_matches_hand_scan_of_fixture() {
    let text = routes_csv(5000, 42);
    let by_hand = text.lines().skip(1).filter(|l| l.starts_with("BA,")).count();
    let frame = read(&text, &CsvOptions::default()).unwrap().frame;
    let airline = frame.column_index("airline").unwrap();
    let counted = frame.rows().iter().filter(|r| r[airline] == Value::Str("BA".into())).count();
    assert_eq!(counted, by_hand);
    assert!(by_hand > 0);
}

fn sample_frame(n: i64) -> TableFrame {
    let schema = vec![Field::new("id", Dtype::Int), Field::new("label", Dtype::String)];
    TableFrame::new(schema, (0..n).map(|i| vec![Value::Int(i), Value::Str(format!("l{i}"))]).collect()).unwrap()
}

#[test]
fn table_store_put_append_get_remove() {
    let dir = tempfile::tempdir().unwrap();
    let store = TableStore::open(dir.path()).unwrap();
    store.put("t", &sample_frame(3)).unwrap();
    store.append("t", &sample_frame(2)).unwrap();
    assert_eq!(store.get("t").unwrap().num_rows(), 5);
    store.put("t", &sample_frame(1)).unwrap();
    assert_eq!(store.get("t").unwrap().num_rows(), 1);
    let other = TableFrame::new(vec![Field::new("x", Dtype::Float)], vec![]).unwrap();
    assert!(store.append("t", &other).is_err());
    let listed = store.list().unwrap();
    assert_eq!((listed[0].name.as_str(), listed[0].row_count), ("t", 1));
    assert!(matches!(store.put("../escape", &other), Err(TableStoreError::InvalidName(_))));
    store.remove("t").unwrap();
    assert!(matches!(store.get("t"), Err(TableStoreError::NotFound(_))));
}

#[test]
fn envelopes_round_trip() {
    let frame = sample_frame(4);
    for p in [
        Payload::Frame(frame),
        Payload::EndOfStream,
        Payload::Failed { stage: "n1".into(), message: "boom".into() },
    ] {
        assert_eq!(envelope::decode(&envelope::encode(&p)).unwrap(), p);
    }
    assert_eq!(envelope::encode(&Payload::EndOfStream), br#"{"control":"end_of_stream"}"#);
    assert!(envelope::decode(b"{\"schema\":[{\"name\":\"a\",\"dtype\":\"int\"}],\"rows\":[[\"x\"]]}").is_err());
}

#[test]
fn derivative_checksum_is_worker_invariant() {
    let base = derivative_workload(10_001, 2, 1).unwrap();
    for workers in [2, 3, 7, 64] {
        assert_eq!(derivative_workload(10_001, 2, workers).unwrap().checksum.to_bits(), base.checksum.to_bits());
    }
    assert!(derivative_workload(2, 1, 1).is_err());
    assert!(derivative_workload(10, 0, 1).is_err());
}

#[test]
fn doubling_reps_roughly_doubles_duration() {
    // best of several runs keeps scheduler noise out of the ratio
    let best = |reps| {
        (0..5)
            .map(|_| {
                let t = Instant::now();
                derivative_workload(1_000_000, reps, 1).unwrap();
                t.elapsed().as_secs_f64()
            })
            .fold(f64::INFINITY, f64::min)
    };
    let ratio = best(8) / best(4);
    assert!((1.5..=2.5).contains(&ratio), "ratio {ratio}");
}

proptest! {
    #[test]
    fn written_csv_reads_back(rows in prop::collection::vec((any::<i32>(), "[a-z]{1,8}", -1e6f64..1e6), 1..40)) {
        let mut text = String::from("i,s,f\n");
        for (i, s, f) in &rows {
            text.push_str(&format!("{i},{s},{f:?}\n"));
        }
        let frame = read(&text, &CsvOptions::default()).unwrap().frame;
        prop_assert_eq!(frame.num_rows(), rows.len());
        for (row, (i, s, f)) in frame.rows().iter().zip(&rows) {
            prop_assert_eq!(&row[0], &Value::Int(*i as i64));
            prop_assert_eq!(&row[1], &Value::Str(s.clone()));
            prop_assert_eq!(&row[2], &Value::Float(*f));
        }
    }
}
