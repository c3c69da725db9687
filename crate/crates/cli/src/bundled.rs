//! Configs and fixtures compiled into the binary.

macro_rules! bundle {
    ($($name:literal => $what:literal),* $(,)?) => {
        pub const CONFIGS: &[(&str, &str, &str)] = &[
            $(($name, $what, include_str!(concat!("../../../configs/", $name, ".json")))),*
        ];
    };
}

bundle! {
    "one_area_h6" => "230 GW area, H = 6 s, loss of 3000 MW with nominal reserves",
    "one_area_h3" => "230 GW area, H = 3 s, loss of 3000 MW with nominal reserves",
    "one_area_h3_fast" => "230 GW area, H = 3 s, primary reserve fully active after 5 s",
    "two_area_hII_1" => "two 115 GW areas, H_II = 1 s, loss of 3000 MW in area II",
    "two_area_hII_3" => "two 115 GW areas, H_II = 3 s, loss of 3000 MW in area II",
    "two_area_hII_6" => "two 115 GW areas, H_II = 6 s, loss of 3000 MW in area II",
    "three_area_string" => "three areas tied in a string, loss of 3000 MW in area III",
    "three_area_triangle" => "three areas tied in a triangle, loss of 3000 MW in area III",
    "region_baseline" => "region of attraction, H = 6 s, k = 1.5 %/Hz",
    "region_double_damping" => "region of attraction with doubled load damping",
    "region_double_inertia" => "region of attraction with doubled inertia",
    "phase_high_inertia_low_damping" => "phase plot, H_1 = 6 s, k_1 = 1.5 %/Hz",
    "phase_low_inertia_low_damping" => "phase plot, H_1 = 3 s, k_1 = 1.5 %/Hz",
    "phase_low_inertia_high_damping" => "phase plot, H_1 = 3 s, k_1 = 4.5 %/Hz",
    "inertia_synthetic_year" => "inertia statistics of a synthetic hourly dispatch year",
}

/// Data files referenced by bundled configs, by file name.
pub const FIXTURES: &[(&str, &str)] = &[("synthetic_year.csv", include_str!("../../../configs/synthetic_year.csv"))];

pub fn config(name: &str) -> Option<&'static str> {
    let name = name.strip_suffix(".json").unwrap_or(name);
    CONFIGS.iter().find(|c| c.0 == name).map(|c| c.2)
}

pub fn fixture(name: &str) -> Option<&'static str> {
    FIXTURES.iter().find(|f| f.0 == name).map(|f| f.1)
}
