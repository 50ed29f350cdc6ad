import json

import pytest

from convoscribe import ParseError, ValidationError, parse_conversation, parse_corpus
from convoscribe.transcript_io import serialize_conversation, serialize_corpus

from conftest import make_conversation


def write_jsonl(path, records):
    path.write_text("\n".join(json.dumps(r) for r in records) + "\n", encoding="utf-8")


def record(conv="ep1", idx=0, speaker="A", start=0.0, end=1.0, text="hi there", **extra):
    base = {
        "conversation_id": conv,
        "utterance_index": idx,
        "speaker_id": speaker,
        "start": start,
        "end": end,
        "text": text,
    }
    base.update(extra)
    return base


class TestParse:
    def test_well_formed_two_utterances(self, tmp_path):
        path = tmp_path / "t.jsonl"
        write_jsonl(path, [record(idx=0), record(idx=1, start=1.0, end=2.0, text="bye")])
        conv = parse_conversation(path)
        assert len(conv.utterances) == 2
        assert conv.utterances[0].texts == ("hi", "there")
        assert conv.utterances[1].terminated

    def test_end_before_start_rejected(self, tmp_path):
        path = tmp_path / "t.jsonl"
        write_jsonl(path, [record(start=3.0, end=1.0)])
        with pytest.raises(ValidationError):
            parse_conversation(path)

    def test_out_of_order_starts_names_index(self, tmp_path):
        path = tmp_path / "t.jsonl"
        write_jsonl(
            path,
            [
                record(idx=0, start=5.0, end=6.0),
                record(idx=1, start=2.0, end=3.0),
            ],
        )
        with pytest.raises(ValidationError, match="utterance 1"):
            parse_conversation(path)

    def test_malformed_json_reports_line(self, tmp_path):
        path = tmp_path / "t.jsonl"
        path.write_text(json.dumps(record()) + "\n{broken\n", encoding="utf-8")
        with pytest.raises(ParseError, match="line 2"):
            parse_conversation(path)

    def test_missing_field_reports_line(self, tmp_path):
        path = tmp_path / "t.jsonl"
        bad = record()
        del bad["speaker_id"]
        write_jsonl(path, [bad])
        with pytest.raises(ParseError, match="speaker_id"):
            parse_conversation(path)

    def test_role_and_terminated_fields(self, tmp_path):
        path = tmp_path / "t.jsonl"
        write_jsonl(path, [record(role="host", terminated=False)])
        conv = parse_conversation(path)
        assert conv.utterances[0].speaker.role.value == "host"
        assert conv.utterances[0].terminated is False

    def test_multiple_conversations(self, tmp_path):
        path = tmp_path / "t.jsonl"
        write_jsonl(path, [record(conv="a"), record(conv="b")])
        corpus = parse_corpus(path)
        assert [c.id for c in corpus] == ["a", "b"]
        with pytest.raises(ValidationError, match="exactly one"):
            parse_conversation(path)

    def test_non_increasing_index_rejected(self, tmp_path):
        path = tmp_path / "t.jsonl"
        write_jsonl(path, [record(idx=1), record(idx=1, start=1.0, end=2.0)])
        with pytest.raises(ValidationError, match="does not increase"):
            parse_conversation(path)


class TestRoundTrip:
    def test_parse_serialize_parse(self, tmp_path):
        conv = make_conversation(
            [
                ("Hello , world .", "A", {"role": None}),
                ("Great show !", "B"),
                ("", "A", {"terminated": False}),
            ],
            conv_id="ep42",
        )
        first = tmp_path / "a.jsonl"
        second = tmp_path / "b.jsonl"
        serialize_conversation(conv, first)
        parsed = parse_conversation(first)
        serialize_conversation(parsed, second)
        assert parse_conversation(second) == parsed
        assert parsed.id == "ep42"
        assert parsed.utterances[2].terminated is False

    def test_corpus_round_trip(self, tmp_path):
        convs = [
            make_conversation([("one", "A")], conv_id="x"),
            make_conversation([("two words", "B")], conv_id="y"),
        ]
        path = tmp_path / "corpus.jsonl"
        serialize_corpus(convs, path)
        assert parse_corpus(path) == convs


class TestCsvAlias:
    def test_csv_reader(self, tmp_path):
        path = tmp_path / "t.csv"
        path.write_text(
            "conversation_id,utterance_index,speaker_id,role,start,end,text,terminated\n"
            'ep1,0,A,host,0.0,1.5,"Hello , world .",true\n'
            "ep1,1,B,,1.5,2.0,Fine,false\n",
            encoding="utf-8",
        )
        conv = parse_conversation(path)
        assert conv.utterances[0].texts == ("Hello", ",", "world", ".")
        assert conv.utterances[0].speaker.role.value == "host"
        assert conv.utterances[1].terminated is False

    def test_csv_missing_header(self, tmp_path):
        path = tmp_path / "t.csv"
        path.write_text("conversation_id,speaker_id\nep1,A\n", encoding="utf-8")
        with pytest.raises(ParseError, match="missing"):
            parse_conversation(path)
