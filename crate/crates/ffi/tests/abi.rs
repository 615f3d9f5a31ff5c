use std::ffi::{CStr, CString};
use std::ptr;

use ising_moments_ffi::*;

unsafe fn take_string(s: *mut std::ffi::c_char) -> String {
    let out = CStr::from_ptr(s).to_str().unwrap().to_owned();
    ism_string_free(s);
    out
}

unsafe fn last_error() -> String {
    CStr::from_ptr(ism_last_error()).to_str().unwrap().to_owned()
}

#[test]
fn ring_round_trip() {
    unsafe {
        let topo = CString::new("ring").unwrap();
        let mut model = ptr::null_mut();
        assert_eq!(ism_model_generate(6, topo.as_ptr(), 1.0, 0.3, 4, &mut model), IsmStatus::Ok);
        assert_eq!(ism_model_p(model), 6);

        let mut table = ptr::null_mut();
        assert_eq!(ism_table_exact(model, 6, &mut table), IsmStatus::Ok);
        let mut m0 = 0.0;
        assert_eq!(ism_table_query(table, ptr::null(), 0, &mut m0), IsmStatus::Ok);
        assert!((m0 - 1.0).abs() < 1e-12);

        let mut opts = ism_schedule_options_default();
        opts.d = 12;
        opts.iterations = 3000;
        opts.eta = 1.0;
        let mut est = ptr::null_mut();
        assert_eq!(ism_learn_couplings(table, 1.0, opts, &mut est), IsmStatus::Ok);

        let mut json = ptr::null_mut();
        assert_eq!(ism_model_to_json(model, &mut json), IsmStatus::Ok);
        let truth = ising_moments::IsingModel::from_json(&take_string(json)).unwrap();
        for (u, v, j) in truth.couplings() {
            let mut got = 0.0;
            assert_eq!(ism_estimate_coupling(est, u, v, &mut got), IsmStatus::Ok);
            assert!((got - j).abs() < 1e-2, "({u},{v}) {got} vs {j}");
        }

        let mut edges = ptr::null_mut();
        assert_eq!(ism_threshold_edges(est, 0.3, &mut edges), IsmStatus::Ok);
        assert_eq!(ism_edges_len(edges), 6);
        let (mut a, mut b) = (0, 0);
        assert_eq!(ism_edges_get(edges, 0, &mut a, &mut b), IsmStatus::Ok);
        assert_eq!((a, b), (0, 1));
        assert_eq!(ism_edges_get(edges, 6, &mut a, &mut b), IsmStatus::Error);

        assert_eq!(ism_learn_fields(est, edges, table, 1.0, opts), IsmStatus::Ok);
        for (u, &h) in truth.fields().iter().enumerate() {
            let mut got = 0.0;
            assert_eq!(ism_estimate_field(est, u, &mut got), IsmStatus::Ok);
            assert!((got - h).abs() < 1e-2, "field {u}: {got} vs {h}");
        }

        let mut known = ptr::null_mut();
        assert_eq!(ism_learn_known_structure(table, edges, 1.0, 3000, 1.0, &mut known), IsmStatus::Ok);
        let mut got = 0.0;
        assert_eq!(ism_estimate_coupling(known, 0, 1, &mut got), IsmStatus::Ok);
        assert!((got - truth.coupling(0, 1)).abs() < 1e-2);

        let mut ej = ptr::null_mut();
        assert_eq!(ism_estimate_to_json(est, &mut ej), IsmStatus::Ok);
        let text = CString::new(take_string(ej)).unwrap();
        let mut back = ptr::null_mut();
        assert_eq!(ism_estimate_from_json(text.as_ptr(), &mut back), IsmStatus::Ok);

        ism_estimate_free(back);
        ism_estimate_free(known);
        ism_estimate_free(est);
        ism_edges_free(edges);
        ism_table_free(table);
        ism_model_free(model);
    }
}

#[test]
fn error_codes() {
    unsafe {
        let mut model = ptr::null_mut();
        let bad = CString::new("{\"p\": 2, \"couplings\": [[0, 0, 1.0]], \"fields\": [0, 0]}").unwrap();
        assert_eq!(ism_model_from_json(bad.as_ptr(), &mut model), IsmStatus::Schema);
        assert!(model.is_null());
        assert!(!last_error().is_empty());

        assert_eq!(ism_model_from_json(ptr::null(), &mut model), IsmStatus::NullPointer);
        assert!(last_error().contains("json"));

        let ring = CString::new("ring").unwrap();
        assert_eq!(ism_model_generate(8, ring.as_ptr(), 0.5, 1.0, 0, &mut model), IsmStatus::Infeasible);
        let blob = CString::new("blob").unwrap();
        assert_eq!(ism_model_generate(8, blob.as_ptr(), 1.0, 0.1, 0, &mut model), IsmStatus::Error);

        assert_eq!(ism_model_generate(5, ring.as_ptr(), 1.0, 0.1, 0, &mut model), IsmStatus::Ok);
        let mut table = ptr::null_mut();
        assert_eq!(ism_table_sampled(model, 1000, 3, 2, &mut table), IsmStatus::Ok);
        let mut opts = ism_schedule_options_default();
        opts.d = 4;
        let mut est = ptr::null_mut();
        assert_eq!(ism_learn_couplings(table, 1.0, opts, &mut est), IsmStatus::MissingMoment);
        assert!(last_error().contains("degree 6"));
        assert!(est.is_null());

        ism_table_free(table);
        ism_model_free(model);
        ism_model_free(ptr::null_mut());
        ism_string_free(ptr::null_mut());
    }
}

#[test]
fn version_is_set() {
    let v = unsafe { CStr::from_ptr(ism_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}
