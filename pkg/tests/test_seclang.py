import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crs_learn.errors import RuleParseError
from crs_learn.seclang import (
    Severity,
    dump_ruleset,
    load_ruleset,
    parse_ruleset,
    rules_at_pl,
)

DETECT = '''SecRule REQUEST_COOKIES|ARGS_NAMES|ARGS "@detectSQLi" \\
    "id:942100,phase:2,block,capture,t:none,t:utf8toUnicode,t:urlDecodeUni,t:removeNulls,\\
    msg:'SQL Injection Attack Detected via libinjection',tag:'paranoia-level/1',\\
    severity:'CRITICAL',multiMatch"
'''


def rule(rid, op='"@rx union"', pl=1, sev="CRITICAL", extra=""):
    return (f'SecRule ARGS {op} "id:{rid},phase:2,block,t:none,t:lowercase,'
            f"tag:'paranoia-level/{pl}',severity:'{sev}'{extra}\"\n")


def test_detect_sqli_rule_fields():
    rs = parse_ruleset(DETECT)
    (r,) = rs.rules
    assert r.id == 942100
    assert r.paranoia_level == 1
    assert r.severity is Severity.CRITICAL
    assert r.operator.name == "detectSQLi"
    assert r.multi_match
    assert r.transformations == ("none", "utf8toUnicode", "urlDecodeUni", "removeNulls")
    assert [str(t) for t in r.targets] == ["REQUEST_COOKIES", "ARGS_NAMES", "ARGS"]


def test_severity_scores():
    assert [s.score for s in (Severity.CRITICAL, Severity.ERROR, Severity.WARNING,
                              Severity.NOTICE)] == [5, 4, 3, 2]
    assert Severity.parse("'WARNING'") is Severity.WARNING
    # numeric severities follow syslog numbering: 2 is critical, 5 is notice
    assert Severity.parse("2") is Severity.CRITICAL
    assert Severity.parse("5") is Severity.NOTICE


def test_empty_input():
    rs = parse_ruleset("")
    assert len(rs) == 0 and rs.skipped == ()


def test_comments_and_markers_are_skipped():
    text = "# a comment\nSecMarker \"END\"\n" + rule(1) + "SecComponentSignature \"x\"\n"
    assert parse_ruleset(text).ids == [1]


def test_file_order_preserved():
    text = rule(30) + rule(10) + rule(20)
    assert parse_ruleset(text).ids == [30, 10, 20]


def test_unknown_operator_strict_names_rule_and_line():
    text = rule(1) + rule(2, op='"@geoLookup"')
    with pytest.raises(RuleParseError) as err:
        parse_ruleset(text, mode="strict")
    assert err.value.rule_id == 2
    assert err.value.line == 2


def test_permissive_records_skipped_rules():
    text = rule(1) + rule(2, op='"@geoLookup"') + rule(3, extra=",t:bogusTransform") \
        + rule(4, op='"@rx (unclosed"')
    rs = parse_ruleset(text, mode="permissive")
    assert rs.ids == [1]
    assert [s.rule_id for s in rs.skipped] == [2, 3, 4]
    assert all(s.reason for s in rs.skipped)
    assert "bogusTransform" in rs.skipped[1].reason


def test_duplicate_ids_rejected():
    with pytest.raises(RuleParseError):
        parse_ruleset(rule(5) + rule(5))


def test_missing_pl_tag_defaults_to_one_with_warning():
    text = 'SecRule ARGS "@rx x" "id:7,phase:2,block,severity:\'ERROR\'"\n'
    rs = parse_ruleset(text)
    assert rs[7].paranoia_level == 1
    assert rs.warnings


def test_control_rules_are_not_scoring_rules():
    text = ('SecRule TX:DETECTION_PARANOIA_LEVEL "@lt 2" '
            '"id:942013,phase:1,pass,nolog,skipAfter:END-X"\n' + rule(1))
    rs = parse_ruleset(text)
    assert rs.ids == [1]
    assert [i.rule_id for i in rs.ignored] == [942013]


def test_chain_folds_into_parent():
    text = ('SecRule ARGS "@rx select" "id:9,phase:2,block,chain,'
            "tag:'paranoia-level/2',severity:'WARNING'\"\n"
            '    SecRule ARGS "@rx from" "t:none,t:lowercase"\n')
    rs = parse_ruleset(text)
    (r,) = rs.rules
    assert r.paranoia_level == 2 and r.severity is Severity.WARNING
    assert len(r.chain) == 1
    assert r.chain[0].operator.argument == "from"
    assert r.chain[0].transformations == ("none", "lowercase")


def test_implicit_rx_and_negation():
    text = rule(1, op='"!union"')
    r = parse_ruleset(text)[1]
    assert r.operator.name == "rx" and r.operator.negated


def test_pm_phrases():
    r = parse_ruleset(rule(1, op='"@pm Foo bar"'))[1]
    assert r.operator.name == "pm"
    assert r.operator.phrases == ("foo", "bar")


def test_pm_from_file_resolves_relative_to_conf(tmp_path):
    (tmp_path / "words.data").write_text("# comment\nAlpha\n\nbeta\n")
    r = parse_ruleset(rule(1, op='"@pmFromFile words.data"'), base_dir=str(tmp_path))[1]
    assert r.operator.phrases == ("alpha", "beta")


def test_missing_pm_file_is_a_parse_error(tmp_path):
    with pytest.raises(RuleParseError):
        parse_ruleset(rule(1, op='"@pmFromFile nope.data"'), base_dir=str(tmp_path))


def test_rules_at_pl_range():
    rs = parse_ruleset(rule(1))
    for bad in (0, 5, -1):
        with pytest.raises(ValueError):
            rules_at_pl(rs, bad)


def test_fixture_parses_strict(ruleset):
    assert len(ruleset) == 39
    assert ruleset.pl_counts() == {1: 13, 2: 20, 3: 4, 4: 2}
    assert ruleset.skipped == ()
    assert len(ruleset.ignored) == 8


def test_fixture_rules_at_pl_are_nested(ruleset):
    sizes = [len(rules_at_pl(ruleset, pl)) for pl in (1, 2, 3, 4)]
    assert sizes == [13, 33, 37, 39]
    assert rules_at_pl(ruleset, 4).ids == ruleset.ids


def test_round_trip(ruleset):
    text = dump_ruleset(ruleset)
    again = load_ruleset(text)
    assert again.rules == ruleset.rules
    assert dump_ruleset(again) == text


def test_source_digest_tracks_content():
    a = parse_ruleset(rule(1))
    b = parse_ruleset(rule(1) + "\n")
    assert a.source_digest != b.source_digest
    assert a.source_digest == parse_ruleset(rule(1)).source_digest


@settings(max_examples=200, deadline=None)
@given(st.lists(st.integers(1, 4), min_size=1, max_size=12), st.integers(1, 4), st.integers(1, 4))
def test_pl_monotonicity_property(pls, p, q):
    text = "".join(rule(100 + i, pl=pl) for i, pl in enumerate(pls))
    rs = parse_ruleset(text)
    lo, hi = min(p, q), max(p, q)
    assert set(rules_at_pl(rs, lo).ids) <= set(rules_at_pl(rs, hi).ids)
    assert all(r.paranoia_level <= lo for r in rules_at_pl(rs, lo))
