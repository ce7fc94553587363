import pytest

from carbonclear.cli import main
from carbonclear.matpower import MatpowerParseError, export_rts_gmlc_csv, parse_case, rts_gmlc_unit_labels
from carbonclear.scenario import load_rts_gmlc

CASE = """function mpc = tiny
mpc.version = '2';
mpc.baseMVA = 100;
mpc.bus = [
\t1\t3\t0\t0\t0\t0\t1\t1\t0\t230\t1\t1.05\t0.95;
\t2\t1\t60\t10\t0\t0\t1\t1\t0\t230\t1\t1.05\t0.95;  % load bus
\t3\t2\t40\t5\t0\t0\t1\t1\t0\t230\t1\t1.05\t0.95;
];
mpc.gen = [
\t1\t50\t0\t30\t-25\t1\t100\t1\t76\t30\t0\t0\t0\t0\t0\t0\t0\t0\t0\t0\t0;
\t3\t20\t0\t10\t-10\t1\t100\t1\t55\t22\t0\t0\t0\t0\t0\t0\t0\t0\t0\t0\t0;
\t3\t0\t0\t50\t-50\t1\t100\t1\t0\t0\t0\t0\t0\t0\t0\t0\t0\t0\t0\t0\t0;
\t2\t0\t0\t0\t0\t1\t100\t1\t10\t0\t0\t0\t0\t0\t0\t0\t0\t0\t0\t0\t0;
];
mpc.branch = [
\t1\t2\t0.01\t0.1\t0.02\t100\t100\t100\t0\t0\t1\t-360\t360;
\t2\t3\t0.01\t0.05\t0.02\t80\t80\t80\t0\t0\t1\t-360\t360;
\t1\t3\t0.01\t0.2\t0.02\t50\t50\t50\t0\t0\t1\t-360\t360;
];
mpc.gencost = [
\t1\t0\t0\t4\t30\t800\t45\t1100\t60\t1400\t76\t1800;
\t1\t0\t0\t4\t22\t900\t33\t1300\t44\t1700\t55\t2100;
\t1\t0\t0\t4\t0\t0\t0\t0\t0\t0\t0\t0;
\t1\t0\t0\t4\t0\t0\t3\t0\t7\t0\t10\t0;
];
mpc.bus_name = {
\t'Alpha';
\t'Beta';
\t'Gamma';
};
"""


def test_parse_case():
    case = parse_case(CASE)
    assert case.base_mva == 100
    assert case.bus.shape == (3, 13) and case.gen.shape == (4, 21)
    assert case.bus_names == ["Alpha", "Beta", "Gamma"]
    assert rts_gmlc_unit_labels(case) == [("STEAM", "Coal"), ("CT", "NG"), ("SYNC_COND", "Sync_Cond"), ("PV", "Solar")]


def test_parse_errors():
    with pytest.raises(MatpowerParseError, match="baseMVA"):
        parse_case("mpc.bus = [1 2];")
    with pytest.raises(MatpowerParseError, match="mpc.gen"):
        parse_case(CASE.replace("mpc.gen =", "mpc.gens ="))
    with pytest.raises(MatpowerParseError, match="row"):
        parse_case(CASE.replace("\t3\t2\t40", "\t3\tx\t40"))


def test_export_and_load(tmp_path):
    export_rts_gmlc_csv(parse_case(CASE), tmp_path)
    net = load_rts_gmlc(str(tmp_path), utilities="const:50")
    assert [b.id for b in net.buses] == ["1", "2", "3"] and net.buses[0].is_reference
    assert [c.p_max for c in net.consumers] == [60.0, 40.0]
    assert net.lines[1].susceptance == pytest.approx(100 / 0.05)
    assert net.lines[1].flow_limit == 80
    coal = net.generators[0]
    assert (coal.p_min, coal.p_max, coal.emission_intensity) == (30.0, 76.0, 0.9606)
    assert coal.cost == pytest.approx((1800 - 800) / (76 - 30))  # chord of the cost curve


def test_cli_import(tmp_path, capsys):
    case = tmp_path / "tiny.m"
    case.write_text(CASE)
    assert main(["import-matpower", str(case), "--out", str(tmp_path / "csv")]) == 0
    assert (tmp_path / "csv" / "gen.csv").exists()
    case.write_text(CASE.replace("mpc.baseMVA = 100;", ""))
    assert main(["import-matpower", str(case), "--out", str(tmp_path / "csv2")]) == 2
