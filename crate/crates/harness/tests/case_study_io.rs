use geokrige_harness::case_study::{read_case_csv, write_case_csv, CaseData};
use geokrige_harness::CaseStudyConfig;
use geokrige::Location;

fn sample(n: usize) -> CaseData {
    CaseData {
        ids: (1..=n as u64).collect(),
        locations: (0..n).map(|k| Location::new(k as f64 * 10.0, (k % 7) as f64 * 13.0)).collect(),
        values: (0..n).map(|k| [k as f64, -(k as f64), 0.5]).collect(),
    }
}

#[test]
fn csv_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("pts.csv");
    let data = sample(50);
    write_case_csv(&p, &data).unwrap();
    assert_eq!(read_case_csv(&p, &CaseStudyConfig::default()).unwrap(), data);
}

fn with_bad_rows(n_good: usize, n_bad: usize) -> String {
    let mut s = String::from("point_id,x_m,y_m,var_1,var_2,var_3\n");
    for k in 0..n_good {
        s.push_str(&format!("{k},{},{},1,2,3\n", k * 10, k % 9));
    }
    for k in 0..n_bad {
        s.push_str(&format!("{},1,1,NaN,2,\n", n_good + k));
    }
    s
}

#[test]
fn up_to_one_percent_bad_rows_are_skipped() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("pts.csv");
    std::fs::write(&p, with_bad_rows(990, 10)).unwrap();
    let data = read_case_csv(&p, &CaseStudyConfig::default()).unwrap();
    assert_eq!(data.len(), 990);

    std::fs::write(&p, with_bad_rows(989, 11)).unwrap();
    let err = read_case_csv(&p, &CaseStudyConfig::default()).unwrap_err();
    assert_eq!(err.exit_code(), 3);
    assert!(err.to_string().contains("11 of 1000"));
}

#[test]
fn custom_columns_and_missing_columns() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("pts.csv");
    std::fs::write(&p, "id,east,north,a,b,c\n7,1.5,2.5,0.1,0.2,0.3\n").unwrap();
    let cfg = CaseStudyConfig {
        id_column: "id".into(),
        x_column: "east".into(),
        y_column: "north".into(),
        variables: ["a".into(), "b".into(), "c".into()],
        ..Default::default()
    };
    let data = read_case_csv(&p, &cfg).unwrap();
    assert_eq!(data.ids, vec![7]);
    assert_eq!(data.values, vec![[0.1, 0.2, 0.3]]);
    let err = read_case_csv(&p, &CaseStudyConfig::default()).unwrap_err();
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn duplicate_ids_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("pts.csv");
    std::fs::write(&p, "point_id,x_m,y_m,var_1,var_2,var_3\n1,0,0,1,1,1\n1,5,5,1,1,1\n").unwrap();
    assert_eq!(read_case_csv(&p, &CaseStudyConfig::default()).unwrap_err().exit_code(), 3);
}
