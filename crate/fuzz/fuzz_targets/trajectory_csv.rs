#![no_main]

use heavyball::experiment::read_trajectory_csv;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(table) = read_trajectory_csv(data) {
        for (i, row) in table.rows.iter().enumerate() {
            assert_eq!(row.len(), 2 * table.dim + 3);
            assert!(row.iter().all(|v| v.is_finite()));
            let _ = (table.position(i), table.velocity(i), table.energy(i), table.grad_norm(i));
        }
        assert!(table.rows.windows(2).all(|w| w[0][0] <= w[1][0]));
    }
});
