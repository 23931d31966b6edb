//! Scripted controller and observer for deployment dialogues.

use serde_json::{json, Value as Json};

use super::intent::{is_furniture, is_rubbish};
use crate::oracle::{Speaker, Turn};
use crate::sim::{RelationKind, SceneDescription, TABLE};

fn names_in(v: &Json) -> Vec<String> {
    v["observed_objs"].as_array().map(|a| a.iter().filter_map(|x| x.as_str().map(str::to_string)).collect()).unwrap_or_default()
}

fn list(items: &[String]) -> String {
    match items.len() {
        0 => String::new(),
        1 => format!("the {}", items[0]),
        _ => {
            let (last, head) = items.split_last().expect("nonempty");
            format!("the {} and the {last}", head.join(", the "))
        }
    }
}

fn on_table(d: &SceneDescription) -> Vec<String> {
    d.objects
        .iter()
        .filter(|o| d.holds(&crate::sim::Relation::new(o.name.clone(), RelationKind::On, Some(TABLE))))
        .map(|o| o.name.clone())
        .collect()
}

fn placement(d: &SceneDescription, x: &str) -> String {
    let mut parts: Vec<String> = d
        .relations_of(x)
        .filter(|r| matches!(r.relation, RelationKind::On | RelationKind::Inside))
        .map(|r| r.sentence())
        .collect();
    if parts.is_empty() {
        parts.push(format!("the {x} is held by the robot"));
    }
    let s = parts.join(" and ");
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect::<String>() + ".",
        None => String::new(),
    }
}

/// Strip articles and trailing punctuation from a noun phrase.
fn noun(s: &str) -> String {
    let s = s.trim().trim_end_matches(['?', '.', '!']).trim();
    let s = s.strip_prefix("the ").or_else(|| s.strip_prefix("my ")).or_else(|| s.strip_prefix("a ")).unwrap_or(s);
    s.trim().to_string()
}

/// Answer a question about the scene: `{"answer", "observed_objs"}`.
pub fn observe(query: &str, d: &SceneDescription) -> Json {
    let ql = query.trim().to_lowercase();
    let visible: Vec<String> = d.objects.iter().map(|o| o.name.clone()).collect();
    let reply = |answer: String, objs: Vec<String>| json!({"answer": answer, "observed_objs": objs});

    if let Some(rest) = ql.strip_prefix("what is inside the ").or_else(|| ql.strip_prefix("what is in the ")) {
        let c = noun(rest.trim_end_matches(" now?").trim_end_matches(" now"));
        if !visible.contains(&c) {
            return reply(format!("I cannot see a {c}."), Vec::new());
        }
        if d.holds(&crate::sim::Relation::new(c.clone(), RelationKind::Closed, None)) {
            return reply(format!("The {c} is closed, so it is impossible to determine what is inside it."), vec![c]);
        }
        let inside: Vec<String> = d
            .relations
            .iter()
            .filter(|r| r.relation == RelationKind::Inside && r.object.as_deref() == Some(c.as_str()))
            .map(|r| r.subject.clone())
            .collect();
        return if inside.is_empty() {
            reply(format!("The {c} is empty."), vec![c])
        } else {
            let mut objs = inside.clone();
            objs.push(c.clone());
            reply(format!("{} {} in the {c}.", capital(&list(&inside)), if inside.len() == 1 { "is" } else { "are" }), objs)
        };
    }
    if let Some(rest) = ql.strip_prefix("where is ") {
        let x = noun(rest);
        return if visible.contains(&x) {
            reply(placement(d, &x), vec![x])
        } else {
            reply(format!("The {x} is not visible. I can see {}.", if visible.is_empty() { "nothing".into() } else { list(&visible) }), visible)
        };
    }
    if let Some(rest) = ql.strip_prefix("is the ") {
        let rest = rest.trim_end_matches('?');
        if let Some((a, b)) = rest.split_once(" on the ") {
            let (a, b) = (noun(a), noun(b));
            if !visible.contains(&a) {
                return reply(format!("No, I cannot see the {a}."), Vec::new());
            }
            let yes = d.holds(&crate::sim::Relation::new(a.clone(), RelationKind::On, Some(&b)));
            let objs = [a.clone(), b.clone()].into_iter().filter(|n| visible.contains(n)).collect();
            return reply(if yes { format!("Yes, the {a} is on the {b}.") } else { format!("No. {}", placement(d, &a)) }, objs);
        }
    }
    if ql.starts_with("which objects on the table are rubbish") {
        let r: Vec<String> = on_table(d).into_iter().filter(|n| is_rubbish(n)).collect();
        return if r.is_empty() {
            reply("None of the objects on the table are rubbish.".into(), Vec::new())
        } else {
            reply(format!("{} {} rubbish.", capital(&list(&r)), if r.len() == 1 { "is" } else { "are" }), r)
        };
    }
    if ql.starts_with("what objects are on the table") {
        let t = on_table(d);
        return reply(format!("On the table I can see {}.", if t.is_empty() { "nothing".into() } else { list(&t) }), t);
    }
    reply("I cannot answer that from what I see.".into(), Vec::new())
}

fn capital(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

fn action(thought: &str, name: &str, input: Json) -> Json {
    json!({"Thought": thought, "Action": name, "Action input": input})
}

fn observe_action(thought: &str, query: String) -> Json {
    action(thought, "observe()", json!({"query": query}))
}

fn execute(thought: &str, name: String, objects: Vec<String>, description: String) -> Json {
    action(thought, "execute_task()", json!({"Task Name": name, "Objects": objects, "Task Description": description}))
}

fn finish(thought: &str, message: String) -> Json {
    action(thought, "finish()", json!({"message": message}))
}

enum Want {
    Find(String),
    PutOn(String, String),
    Clean,
    EdgeAndClose(String, String),
    Retrieve(String),
    Open(String),
    Close(String),
    Unknown,
}

fn parse_instruction(text: &str) -> Want {
    let t = text.trim().to_lowercase();
    let t = t.trim_end_matches(['.', '!', '?']).trim().to_string();
    let t = t.strip_prefix("please ").unwrap_or(&t).to_string();
    if t.contains("clean the table") || (t.contains("rubbish") && t.contains("shelf")) {
        return Want::Clean;
    }
    for key in ["can't find ", "cannot find ", "can not find ", "where is ", "find "] {
        if let Some(i) = t.find(key) {
            return Want::Find(noun(&t[i + key.len()..]));
        }
    }
    if let (Some(i), Some(j)) = (t.find("move the "), t.find(" to the edge")) {
        if i < j && t.contains("close the ") {
            let x = noun(&t[i + "move the ".len()..j]);
            let d = noun(t.split("close the ").nth(1).unwrap_or(""));
            return Want::EdgeAndClose(x, d);
        }
    }
    for verb in ["retrieve ", "get me ", "bring me ", "take out "] {
        if let Some(rest) = t.strip_prefix(verb) {
            let x = rest.split(" from ").next().unwrap_or(rest).split(" out of ").next().unwrap_or(rest);
            return Want::Retrieve(noun(x));
        }
    }
    for verb in ["put ", "place ", "stack "] {
        if let Some(rest) = t.strip_prefix(verb) {
            if let Some((a, b)) = rest.split_once(" on top of ").or_else(|| rest.split_once(" on ")) {
                return Want::PutOn(noun(a), noun(b));
            }
        }
    }
    if let Some(rest) = t.strip_prefix("open ") {
        return Want::Open(noun(rest));
    }
    if let Some(rest) = t.strip_prefix("close ") {
        return Want::Close(noun(rest));
    }
    Want::Unknown
}

struct Progress<'a> {
    turns: &'a [Turn],
}

impl Progress<'_> {
    fn observations(&self) -> Vec<&Turn> {
        self.turns.iter().filter(|t| t.speaker == Speaker::Observer).collect()
    }
    fn executions(&self) -> Vec<&Turn> {
        self.turns.iter().filter(|t| t.speaker == Speaker::Executor).collect()
    }
    fn asked(&self, query: &str) -> Option<&Turn> {
        self.observations().into_iter().rev().find(|t| t.data["query"].as_str() == Some(query))
    }
    fn executed(&self, name: &str) -> Option<&Turn> {
        self.executions().into_iter().find(|t| t.data["task"]["Task Name"].as_str() == Some(name))
    }
}

fn succeeded(t: &Turn) -> bool {
    t.data["success"].as_bool().unwrap_or(false)
}

fn title(s: &str) -> String {
    s.split(' ').map(capital).collect::<Vec<_>>().join(" ")
}

/// Next controller action given the dialogue so far. Observer turns carry
/// `{"query", "answer", "observed_objs"}`; executor turns carry
/// `{"task", "success"}`.
pub fn control(history: &[Turn]) -> Json {
    let Some(u) = history.iter().rposition(|t| t.speaker == Speaker::User) else {
        return finish("There is no request to work on.", "How can I help?".into());
    };
    let p = Progress { turns: &history[u + 1..] };
    match parse_instruction(&history[u].text) {
        Want::Find(x) => find(&p, &x),
        Want::PutOn(a, b) => put_on(&p, &a, &b),
        Want::Clean => clean(&p),
        Want::EdgeAndClose(x, d) => {
            let first = format!("Move the {} to the Edge of the Table", title(&x));
            let second = format!("Close the {}", title(&d));
            match (p.executed(&first), p.executed(&second)) {
                (None, _) => execute(
                    "First move the object out of the way.",
                    first,
                    vec![x.clone()],
                    format!("Place the {x} at the right edge of the table."),
                ),
                (Some(t), _) if !succeeded(t) => finish("The move failed.", format!("I could not move the {x}.")),
                (Some(_), None) => execute("Now close it.", second, vec![d.clone()], format!("Push the {d} closed.")),
                (Some(_), Some(t)) if succeeded(t) => {
                    finish("Both parts are done.", format!("I moved the {x} to the edge of the table and closed the {d}."))
                }
                _ => finish("Closing failed.", format!("I moved the {x} but could not close the {d}.")),
            }
        }
        Want::Retrieve(x) => retrieve(&p, &x),
        Want::Open(d) => single(&p, format!("Open the {}", title(&d)), d.clone(), format!("Pull the {d} open."), format!("I opened the {d}.")),
        Want::Close(d) => single(&p, format!("Close the {}", title(&d)), d.clone(), format!("Push the {d} closed."), format!("I closed the {d}.")),
        Want::Unknown => finish("I do not know how to do this.", "Sorry, I do not know how to help with that.".into()),
    }
}

fn single(p: &Progress, name: String, obj: String, desc: String, done: String) -> Json {
    match p.executed(&name) {
        None => execute("The request is clear.", name, vec![obj], desc),
        Some(t) if succeeded(t) => finish("Done.", done),
        Some(_) => finish("It failed.", "Sorry, I could not do that.".into()),
    }
}

fn find(p: &Progress, x: &str) -> Json {
    let where_q = format!("Where is the {x}?");
    let Some(first) = p.asked(&where_q) else {
        return observe_action("I need to look for it.", where_q);
    };
    if names_in(&first.data).iter().any(|n| n == x) {
        let answer = first.data["answer"].as_str().unwrap_or_default();
        return finish("The observer found it.", format!("I found your {x}. {answer}"));
    }
    let seen = names_in(&first.data);
    let Some(d) = seen.iter().find(|n| n.contains("drawer")).cloned() else {
        return finish("It is not anywhere I can see.", format!("Sorry, I could not find your {x}."));
    };
    let inside_q = format!("What is inside the {d}?");
    let open_task = format!("Open the {}", title(&d));
    let asked: Vec<&Turn> = p.observations().into_iter().filter(|t| t.data["query"].as_str() == Some(inside_q.as_str())).collect();
    match (asked.last(), p.executed(&open_task)) {
        (None, _) => observe_action(&format!("It might be inside the {d}."), inside_q),
        (Some(t), _) if names_in(&t.data).iter().any(|n| n == x) => {
            finish("The observer found it.", format!("I found your {x}. It is in the {d}."))
        }
        (Some(t), None) if t.data["answer"].as_str().unwrap_or_default().contains("impossible to determine") => execute(
            "I have to open it to look inside.",
            open_task,
            vec![d.clone()],
            format!("Pull the {d} open so its contents can be seen."),
        ),
        (Some(_), Some(e)) if succeeded(e) && asked.len() < 2 => observe_action("Now I can look inside.", inside_q),
        _ => finish("It is not there.", format!("Sorry, I could not find your {x}.")),
    }
}

fn put_on(p: &Progress, a: &str, b: &str) -> Json {
    let q = format!("Is the {a} on the {b}?");
    let name = format!("Put the {a} on the {b}");
    let Some(obs) = p.asked(&q) else {
        return observe_action("Check the current arrangement first.", q);
    };
    let answer = obs.data["answer"].as_str().unwrap_or_default();
    match p.executed(&name) {
        None if answer.starts_with("Yes") => finish("Nothing to do.", format!("The {a} is already on the {b}.")),
        None if answer.starts_with("No, I cannot see") => finish("The object is missing.", format!("Sorry, I cannot see the {a}.")),
        None => execute(
            "I know where both objects are.",
            name,
            vec![a.to_string(), b.to_string()],
            format!("Stack the {a} on top of the {b}."),
        ),
        Some(t) if succeeded(t) => finish("Done.", format!("I put the {a} on the {b}.")),
        Some(_) => finish("It failed.", format!("Sorry, I could not put the {a} on the {b}.")),
    }
}

fn clean(p: &Progress) -> Json {
    let all_q = "What objects are on the table?".to_string();
    let rubbish_q = "Which objects on the table are rubbish?".to_string();
    let Some(all) = p.asked(&all_q) else {
        return observe_action("I need to know what is on the table.", all_q);
    };
    let Some(rubbish) = p.asked(&rubbish_q) else {
        return observe_action("Which of them should be thrown away?", rubbish_q);
    };
    let on_table = names_in(&all.data);
    let rubbish = names_in(&rubbish.data);
    let bin = on_table.iter().find(|n| n.contains("bin")).cloned();
    let shelf = on_table.iter().find(|n| n.contains("shelf")).cloned();
    let items: Vec<String> = on_table.iter().filter(|n| !rubbish.contains(n) && !is_furniture(n)).cloned().collect();

    let mut plan: Vec<(String, Vec<String>, String)> = Vec::new();
    if let (false, Some(bin)) = (rubbish.is_empty(), &bin) {
        let mut objs = rubbish.clone();
        objs.push(bin.clone());
        plan.push((format!("Put the Rubbish into the {}", title(bin)), objs, format!("Throw {} into the {bin}.", list(&rubbish))));
    }
    if let (false, Some(shelf)) = (items.is_empty(), &shelf) {
        let mut objs = items.clone();
        objs.push(shelf.clone());
        plan.push((format!("Put the Items on the {}", title(shelf)), objs, format!("Line up {} on the {shelf}.", list(&items))));
    }
    if plan.is_empty() {
        return finish("Nothing is out of place.", "The table is already clean.".into());
    }
    for (name, objs, desc) in plan.iter() {
        match p.executed(name) {
            None => return execute("The scene is understood.", name.clone(), objs.clone(), desc.clone()),
            Some(t) if !succeeded(t) => return finish("A step failed.", "Sorry, I could not finish cleaning the table.".into()),
            Some(_) => {}
        }
    }
    finish("Everything is in place.", "The table is clean: the rubbish is in the bin and the other items are on the shelf.".into())
}

fn retrieve(p: &Progress, x: &str) -> Json {
    let where_q = format!("Where is the {x}?");
    let Some(first) = p.asked(&where_q) else {
        return observe_action("Find out where it is.", where_q);
    };
    let seen = names_in(&first.data);
    if seen.iter().any(|n| n == x) {
        let answer = first.data["answer"].as_str().unwrap_or_default();
        if answer.contains("on the table") {
            return finish("It is already out.", format!("The {x} is already on the table."));
        }
    }
    let Some(d) = seen.iter().find(|n| n.contains("drawer")).cloned() else {
        return finish("I cannot see where it could be.", format!("Sorry, I could not find the {x}."));
    };
    let name = format!("Retrieve the {} from the {}", title(x), title(&d));
    match p.executed(&name) {
        None => execute(
            &format!("The {x} is probably in the {d}."),
            name,
            vec![x.to_string(), d.clone()],
            format!("Open the {d}, take the {x} out and put it on the table, then close the {d}."),
        ),
        Some(t) if succeeded(t) => finish("Done.", format!("The {x} is on the table and the {d} is closed.")),
        Some(_) => finish("It failed.", format!("Sorry, I could not get the {x}.")),
    }
}
