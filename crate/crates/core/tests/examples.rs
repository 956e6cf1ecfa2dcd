//! Every example under `examples/` runs to completion.

macro_rules! example_test {
    ($name:ident) => {
        #[allow(dead_code)]
        mod $name {
            include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/", stringify!($name), ".rs"));
        }

        #[test]
        fn $name() {
            $name::run_example().unwrap();
        }
    };
}

example_test!(synth_household);
example_test!(clean_eco_csv);
example_test!(evaluation_metrics);
example_test!(billing_invariance);
example_test!(gradcheck);
example_test!(train_attack);
example_test!(epsilon_sweep);
example_test!(compare_gaussian);
