"""Regenerate the synthetic 200-sample corpus used by the test suite.

    python tests/fixtures/make_corpus.py > tests/fixtures/data/corpus.jsonl

Benign values imitate ordinary form fields (some punctuation-heavy ones hit
the character-count rules); the attacks are small template variations of
common SQLi probes.
"""

import json
import random

rng = random.Random(20240)

WORDS = ["red", "shoes", "winter", "jacket", "garden", "table", "lamp", "blue",
         "coffee", "mug", "order", "status", "travel", "bag", "kids", "book",
         "select", "union", "drop", "from", "update", "where", "and", "or"]
NAMES = ["O'Brien", "D'Angelo", "Smith-Jones", "Zoë", "José", "Anne-Marie", "McKay"]
DOMAINS = ["example.com", "mail.test", "shop.example.org"]

SQLI = [
    "{n}' OR '{n}'='{n}",
    "{n} OR 1=1",
    "' OR 1=1 --",
    "admin'--",
    "{n}' AND SLEEP({k})#",
    "{n}; DROP TABLE {w}",
    "' UNION SELECT {w},{w2} FROM users--",
    "{n} UNION ALL SELECT NULL,NULL,NULL--",
    "1' AND (SELECT COUNT(*) FROM information_schema.tables)>0--",
    "{n}' AND benchmark({big},md5({n}))#",
    "' or ''='",
    "{n}) OR ('{n}'='{n}",
    "{n}/**/OR/**/{n}={n}",
    "1' ORDER BY {k}--",
    "x' AND ascii(substring(version(),1,1))>{k}--",
    "';waitfor delay '0:0:{k}'--",
    "1 AND 1=CONVERT(int,@@version)",
    "{n}' HAVING 1=1--",
    "0x{hex}",
    "' || pg_sleep({k}) --",
    "1; EXEC xp_cmdshell('dir')",
    "{w}' AND extractvalue(1,concat(0x7e,user()))--",
    "-{n}' union select load_file('/etc/passwd')#",
    "1' and '1'='1",
]

BENIGN = [
    lambda: " ".join(rng.sample(WORDS, rng.randint(1, 3))),
    lambda: str(rng.randint(0, 99999)),
    lambda: f"{rng.choice(NAMES)}",
    lambda: f"{rng.choice(WORDS)}.{rng.choice(WORDS)}@{rng.choice(DOMAINS)}",
    lambda: f"{rng.randint(1, 28):02d}/{rng.randint(1, 12):02d}/20{rng.randint(10, 24)}",
    lambda: f"https://{rng.choice(DOMAINS)}/{rng.choice(WORDS)}?id={rng.randint(1, 500)}",
    lambda: f"{rng.choice(WORDS)} & {rng.choice(WORDS)} (size {rng.randint(1, 12)})",
    lambda: f"I'd like the {rng.choice(WORDS)}, please!",
    lambda: f"+1 ({rng.randint(200, 999)}) {rng.randint(100, 999)}-{rng.randint(1000, 9999)}",
    lambda: "{\"q\":\"" + rng.choice(WORDS) + "\",\"n\":" + str(rng.randint(1, 9)) + "}",
    lambda: f"{rng.choice(WORDS)}-{rng.choice(WORDS)}_{rng.randint(1, 99)}",
    lambda: f"select {rng.choice(['a size', 'your region', 'one'])}",
]


def attack():
    t = rng.choice(SQLI)
    return t.format(n=rng.randint(1, 99), k=rng.randint(1, 9), w=rng.choice(WORDS),
                    w2=rng.choice(WORDS), big=rng.randint(10**5, 10**7),
                    hex="".join(rng.choice("0123456789abcdef") for _ in range(8)))


rows = [{"payload": rng.choice(BENIGN)(), "label": 0, "source": "other"} for _ in range(100)]
rows += [{"payload": attack(), "label": 1, "source": "sqlmap"} for _ in range(100)]
rng.shuffle(rows)
for r in rows:
    print(json.dumps(r, ensure_ascii=False))
