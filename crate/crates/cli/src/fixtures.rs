//! Shared test configuration.

pub const SMALL: &str = r#"
[wave]
length = 1150.0
depth = 350.0
hx = 50.0
hz = 50.0
dt_obs = 0.1
substeps = 8
sensors = [150.0, 450.0, 750.0, 1050.0]
qoi = [300.0, 850.0]

[truth]
center = 600.0
width = 150.0
rise_time = 0.8
amplitude = 1.0

[dims]
n_time = 12
"#;
