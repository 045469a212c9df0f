//! Principals, roles, credentials and sessions.
//!
//! Every permission check is a floor comparison: an action names the lowest
//! role allowed to perform it, and membership with any role at or above that
//! floor grants it. Non-members get read-only access to collections whose
//! visibility admits them.

use std::fmt;
use std::str::FromStr;

use argon2::password_hash::{PasswordHash, PasswordHasher, PasswordVerifier, SaltString};
use argon2::{Algorithm, Argon2, Params, Version};
use base64::engine::general_purpose::URL_SAFE_NO_PAD;
use base64::Engine as _;
use rand::rngs::OsRng;
use rand::RngCore;
use serde::{Deserialize, Serialize};
use uuid::Uuid;

use crate::model::{Timestamp, Visibility};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Reader,
    Contributor,
    Approver,
    Admin,
}

impl Role {
    pub const ALL: [Role; 4] = [Role::Reader, Role::Contributor, Role::Approver, Role::Admin];
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Reader => "reader",
            Role::Contributor => "contributor",
            Role::Approver => "approver",
            Role::Admin => "admin",
        })
    }
}

impl FromStr for Role {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Role::ALL
            .into_iter()
            .find(|r| r.to_string() == s)
            .ok_or_else(|| format!("unknown role {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Search,
    Read,
    Export,
    Comment,
    ReadDrafts,
    CreateCollection,
    EditEntry,
    DeleteEntry,
    Import,
    Approve,
    SetVisibility,
    ManageMembers,
}

impl Action {
    pub const ALL: [Action; 12] = [
        Action::Search,
        Action::Read,
        Action::Export,
        Action::Comment,
        Action::ReadDrafts,
        Action::CreateCollection,
        Action::EditEntry,
        Action::DeleteEntry,
        Action::Import,
        Action::Approve,
        Action::SetVisibility,
        Action::ManageMembers,
    ];

    /// Lowest group role that may perform the action.
    pub fn floor(self) -> Role {
        match self {
            Action::Search | Action::Read | Action::Export | Action::Comment | Action::ReadDrafts => {
                Role::Reader
            }
            Action::CreateCollection | Action::EditEntry | Action::DeleteEntry | Action::Import => {
                Role::Contributor
            }
            Action::Approve => Role::Approver,
            Action::SetVisibility | Action::ManageMembers => Role::Admin,
        }
    }

    /// Actions a non-member may take on a collection it can see.
    fn open_to_visitors(self) -> bool {
        matches!(self, Action::Search | Action::Read | Action::Export | Action::Comment)
    }
}

/// The party performing an operation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Actor {
    Anonymous,
    User { id: Uuid, username: String },
    /// Local operator (CLI); bypasses role checks.
    System,
}

impl Actor {
    pub fn label(&self) -> &str {
        match self {
            Actor::Anonymous => "anonymous",
            Actor::User { username, .. } => username,
            Actor::System => "system",
        }
    }

    pub fn user_id(&self) -> Option<Uuid> {
        match self {
            Actor::User { id, .. } => Some(*id),
            _ => None,
        }
    }
}

/// The floor rule. `membership` is the actor's role in the group owning the
/// resource, `None` for non-members.
pub fn permits(
    membership: Option<Role>,
    visibility: Visibility,
    authenticated: bool,
    action: Action,
) -> bool {
    match membership {
        Some(role) => role >= action.floor(),
        None => {
            let visible = match visibility {
                Visibility::Public => true,
                Visibility::Group => authenticated,
                Visibility::Private => false,
            };
            visible && action.open_to_visitors() && (action != Action::Comment || authenticated)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Group {
    pub id: Uuid,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct User {
    pub id: Uuid,
    pub username: String,
    /// PHC-format argon2id hash, salt included.
    pub credential_hash: String,
    #[serde(default)]
    pub memberships: Vec<(Uuid, Role)>,
}

impl User {
    pub fn role_in(&self, group: Uuid) -> Option<Role> {
        self.memberships.iter().find(|(g, _)| *g == group).map(|(_, r)| *r)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Session {
    pub token: String,
    pub user_id: Uuid,
    pub expires_at: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Comment {
    pub id: Uuid,
    pub entry_id: Uuid,
    pub author: Uuid,
    pub body: String,
    pub created_at: Timestamp,
}

/// Argon2id cost parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HashingParams {
    pub memory_kib: u32,
    pub iterations: u32,
    pub parallelism: u32,
}

impl Default for HashingParams {
    fn default() -> Self {
        HashingParams {
            memory_kib: Params::DEFAULT_M_COST,
            iterations: Params::DEFAULT_T_COST,
            parallelism: Params::DEFAULT_P_COST,
        }
    }
}

impl HashingParams {
    /// Cheap parameters for tests.
    pub fn fast() -> Self {
        HashingParams { memory_kib: 64, iterations: 1, parallelism: 1 }
    }

    fn hasher(&self) -> Argon2<'static> {
        let params = Params::new(self.memory_kib, self.iterations, self.parallelism, None)
            .unwrap_or_default();
        Argon2::new(Algorithm::Argon2id, Version::V0x13, params)
    }

    pub fn hash(&self, credential: &str) -> String {
        let salt = SaltString::generate(&mut OsRng);
        self.hasher()
            .hash_password(credential.as_bytes(), &salt)
            .map(|h| h.to_string())
            .expect("argon2 hashing with a generated salt cannot fail")
    }
}

/// Checks a credential against a stored PHC hash. The hash's own embedded
/// parameters are used.
pub fn verify_credential(stored: &str, credential: &str) -> bool {
    match PasswordHash::new(stored) {
        Ok(parsed) => Argon2::default()
            .verify_password(credential.as_bytes(), &parsed)
            .is_ok(),
        Err(_) => false,
    }
}

/// 256 random bits, base64url without padding (43 characters).
pub fn new_token() -> String {
    let mut bytes = [0u8; 32];
    OsRng.fill_bytes(&mut bytes);
    URL_SAFE_NO_PAD.encode(bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roles_are_totally_ordered() {
        assert!(Role::Reader < Role::Contributor);
        assert!(Role::Contributor < Role::Approver);
        assert!(Role::Approver < Role::Admin);
        for r in Role::ALL {
            assert_eq!(r.to_string().parse::<Role>().unwrap(), r);
        }
    }

    #[test]
    fn floor_examples() {
        assert!(permits(Some(Role::Reader), Visibility::Public, true, Action::Search));
        assert!(!permits(Some(Role::Contributor), Visibility::Private, true, Action::Approve));
        assert!(permits(Some(Role::Approver), Visibility::Private, true, Action::Approve));
        assert!(permits(None, Visibility::Public, false, Action::Search));
        assert!(!permits(None, Visibility::Public, false, Action::Comment));
        assert!(permits(None, Visibility::Group, true, Action::Read));
        assert!(!permits(None, Visibility::Group, false, Action::Read));
        assert!(!permits(None, Visibility::Private, true, Action::Read));
        assert!(!permits(None, Visibility::Public, true, Action::ReadDrafts));
    }

    #[test]
    fn role_monotonicity() {
        for action in Action::ALL {
            for vis in [Visibility::Private, Visibility::Group, Visibility::Public] {
                for (i, low) in Role::ALL.iter().enumerate() {
                    for high in &Role::ALL[i..] {
                        if permits(Some(*low), vis, true, action) {
                            assert!(permits(Some(*high), vis, true, action));
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn credentials_hash_and_verify() {
        let params = HashingParams::fast();
        let hash = params.hash("s3cret");
        assert!(!hash.contains("s3cret"));
        assert!(verify_credential(&hash, "s3cret"));
        assert!(!verify_credential(&hash, "s3cret "));
        assert_ne!(hash, params.hash("s3cret"), "salts differ");
        assert!(!verify_credential("garbage", "s3cret"));
    }

    #[test]
    fn token_shape() {
        let token = new_token();
        assert_eq!(token.len(), 43);
        assert!(token.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'-' || b == b'_'));
        assert_ne!(token, new_token());
    }
}
