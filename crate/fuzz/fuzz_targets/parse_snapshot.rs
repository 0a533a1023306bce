#![no_main]

use libfuzzer_sys::fuzz_target;
use splap::grid::{Field, Grid};
use splap::output::{parse_snapshot, write_snapshot};

fuzz_target!(|data: &[u8]| {
    if let Ok((dim, n, values)) = parse_snapshot(data) {
        // a decoded snapshot must re-encode to the exact input bytes
        // (the header carries no box size, so any half-width works here)
        let grid = Grid::new(dim, n, 1.0);
        let field = Field::from_values(grid, values);
        let mut bytes = Vec::with_capacity(data.len());
        write_snapshot(&mut bytes, &field).expect("vec write");
        assert_eq!(bytes, data, "snapshot round trip changed the bytes");
    }
});
